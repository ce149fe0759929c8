"""Extremal clusters of heavy-tailed lattice fields and alignment statistics."""

from .lattice import (
    ClusterShape,
    LatticeWindow,
    canonicalize,
    lex_compare,
    shift_distance,
)
from .models import (
    MAModel,
    TailLawMA,
    load_ma_model,
    ma_extremal_objects,
    ma_mdep_params,
    ma_tail_law,
    sample_ma_window,
)
from .tailproc import TailSample, collect_tail_samples, time_change_check
from .anchoring import AnchorKind, anchor_index, estimate_theta_anchored, palm_check
from .blocks import (
    BlockGrid,
    ai_bounds,
    anticlustering_diagnostic,
    empirical_intensity,
    extract_clusters,
    make_blocks,
)
from .alignment import (
    GumbelParams,
    McConfig,
    ScoreModel,
    check_E_prime,
    extremal_index_alignment,
    gumbel_check,
    gumbel_p_value,
    gumbel_params,
    heatmap_export,
    lundberg_solve,
    load_score_model,
    relative_entropy,
    sample_cluster_Q,
    score_field,
    tail_constant_C,
    tilt,
    validate_model,
)

__version__ = "0.1.0"
