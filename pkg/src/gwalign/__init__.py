"""Unsupervised word-embedding alignment with entropic Gromov-Wasserstein."""

__version__ = "0.1.0"

from .errors import (
    DataError,
    DegenerateMatrixError,
    DegenerateVectorError,
    EmptyEvaluationError,
    EmptyInputError,
    FormatError,
    GWAlignError,
    NumericalError,
    NumericalUnderflowError,
    RowError,
    ShapeError,
    StageError,
)
from .gromov import GwConfig, GwResult, gw_distance, gw_objective, gw_pseudo_cost, gw_solve
from .ingestion import (
    BilingualLexicon,
    EmbeddingMatrix,
    identity_lexicon,
    load_embeddings,
    load_lexicon,
    load_weights,
    save_embeddings,
    save_lexicon,
    uniform_weights,
)
from .mapping import OrthogonalMap, apply_map, barycentric_procrustes, procrustes
from .pipeline import AlignmentRun, align, language_distance_matrix
from .retrieval import (
    Method,
    TranslationTable,
    csls_translate,
    evaluate,
    nn_translate,
    precision_at_k,
    translate_from_coupling,
)
from .similarity import SimilarityMatrix, cosine_similarity_matrix, normalize
from .sinkhorn import Coupling, SinkhornConfig, entropy, sinkhorn_solve, transport_cost
