"""Classical singular value transformation from sampling-and-query access.

Given SQ access to a matrix ``A`` and a vector ``b``, the routines here
return a sparse, implicit description of ``p(A) b`` for bounded even or odd
polynomials ``p`` in the Chebyshev basis.
"""

from .apps import AppResult, hamsim, recommend, regress
from .chebyshev import (
    ChebPoly,
    NoiseConfig,
    cheb_eval_clenshaw,
    cheb_eval_direct,
    clenshaw_iterate_poly,
    coeff_progression_sum,
    even_clenshaw_scalar,
    even_tilde_coeffs,
    odd_clenshaw_scalar,
    odd_sum_certificate,
    random_bounded_poly,
    supnorm_estimate,
)
from .exceptions import (
    CertificationError,
    ConvergenceError,
    ParityError,
    ParseError,
    QisvtError,
    RejectionBudgetExceeded,
    VanishingCombinationError,
    ZeroNormError,
)
from .polyapprox import ApproxSpec, bessel_j, inverse_poly, sign_poly, threshold_poly, trig_polys
from .reference import dense_apply_poly, dense_eig_sym, dense_expm_sym, dense_svd, svt_oracle_svd
from .sketch import AampSketch, BestSketch, apply_aamp_columns, sample_aamp, sample_best
from .sq_access import (
    OversampledVector,
    SqMatrix,
    SqVector,
    build_sq_matrix,
    build_sq_vector,
    linear_combination_access,
    oversample_norm_estimate,
    oversample_to_sample,
)
from .svt import (
    SvtOutput,
    SvtParams,
    even_svt,
    exact_matrix_clenshaw_hermitian,
    hermitian_svt,
    odd_svt,
    output_entry,
    output_norm,
    output_sample,
    spectral_norm_check,
)

__version__ = "0.1.0"
