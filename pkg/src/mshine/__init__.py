"""mshine: heterogeneous information network embedding with automatic
meta-path selection, a recurrent state model trained by negative-sampling SGD,
and ranking/classification evaluation."""

__version__ = "0.1.0"

from .estimator import MShineEmbedding
from .hin import (GraphFormatError, Schema, TypedGraph, export_graph,
                  load_graph, neighbors_by_type, read_edge_list, read_labels,
                  schema_of)
from .metapaths import (MetaPath, TripleIndex, TripleType, decompose,
                        enumerate_symmetric, select_initial, triple_types_of)
from .model import (CheckpointError, ModelParams, compute_state, decode_basic,
                    decode_state, decode_target, forward_triple, init_params,
                    load_checkpoint, predict_prob, save_checkpoint, score)
from .sampling import (NegativeSamplingError, TrainingTriple, TripleSampler,
                       batch_stream, negative_sample, walk_step)
from .training import (BatchGradients, LossReport, TrainConfig,
                       TrainingDiverged, batch_objective, loss_pre,
                       loss_state, sgd_step, train)
from .evaluation import (EvalError, LabeledSplit, OneVsRestLogistic,
                         RankingResult, ap_at_k, classify, export_embeddings,
                         expected_random_mrr, f1_scores, link_contexts,
                         link_prediction_queries, map_score, mrr_score,
                         precision_at_k, rank_candidates, read_embeddings,
                         recall_at_k, relevance)

__all__ = [name for name in dir() if not name.startswith("_")]
