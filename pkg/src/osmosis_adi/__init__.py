"""ADI splitting solvers for linear image osmosis."""

__version__ = "0.1.0"

from .grid_image import (
    Image,
    ensure_positive,
    load_image,
    mean_value,
    rrmse,
    save_image,
)
from .linalg import (
    GridPermutation,
    TridiagonalFactors,
    bicgstab,
    dense_expm_apply,
    factor_shifted,
    solve_factored,
    transpose_permutation,
)
from .operators import (
    DirectionalOperator,
    DriftField,
    apply_operator,
    assemble,
    assemble_directional,
    canonical_drift,
    mask_drift,
)
from .shadow import ShadowMask, load_mask, remove_shadow
from .steppers import (
    EvolutionReport,
    SchemeConfig,
    evolve,
    step_be,
    step_douglas,
    step_fe,
    step_pr,
)
from .validation import bench_grid, conservation_audit, order_study
