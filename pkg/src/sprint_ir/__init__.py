"""Learned sparse retrieval: representations, quantized impact indexes, search and evaluation."""

from .analyzer import Analyzer
from .errors import (
    ConfigError,
    IndexBuildError,
    InvalidInputError,
    ParseError,
    SegmentLoadError,
    SprintError,
)
from .expansion import ExpansionRecord, append_generated_queries, append_top_k_tokens
from .index import ImpactIndex, build_impact_index, build_lexical_index, read_segment, write_segment
from .metrics import MetricReport, evaluate, evaluate_run, mrr_at_k, ndcg_at_k, recall_at_k
from .quantization import QuantizationConfig, quantize_range_nbits, quantize_scale100, quantize_vector
from .representation import (
    SpartaParams,
    TermWeightVector,
    Vocabulary,
    binary_query_weights,
    sparta_term_weights,
    splade_term_weights,
    strip_expansion_tokens,
    tf_term_weights,
)
from .search import Bm25Params, RankedList, rerank, search_bm25, search_impact

__version__ = "0.1.0"
