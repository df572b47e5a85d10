"""Block-structured stationary sums: exact moments, sampling, limit laws.

The package studies normalized partial sums built from independent
coordinates grouped into alternating three-valued and Gaussian scale
blocks.  Closed-form second moments and summability diagnostics live in
``engine``; Monte Carlo draws in ``simulate``; limit-law construction
and distance tests in ``laws``; a finite spectral calculus for the
square-root membership question in ``spectral``; batch presets in
``cli``.
"""

from .blocks import (BlockParity, BlockSpec, MassTarget, SequenceParams,
                     TargetKind, build_blocks, default_params, parity_of,
                     split_blocks)
from .config import (load_params, params_from_json, params_from_text,
                     params_to_json, params_to_text, save_params)
from .engine import (Condition, ConditionReport, ExactMoments, TrendKind,
                     TrendRule, Verdict, dyadic_grid, format_csv,
                     sigma_sq_over_n)
from .errors import (MemoryBudgetError, ParamsError, TruncationError,
                     WorkBudgetError)
from .laws import (DichotomyReport, DichotomyRow, DichotomyVerdict,
                   EmpiricalLaw, ExactFiniteLaw, LawVariant, NormalLaw,
                   SymPoissonLaw, dichotomy_report, empirical_law, exact_law,
                   format_ks_csv, ks_distance, ks_pass_bound, law_to_json,
                   sym_poisson, tv_distance)
from .simulate import (SampleBatch, SampleKind, dichotomy_samples,
                       sample_batch)
from .spectral import (SpectralTag, SpectralToy, binom_coeffs, circulant_toy,
                       evaluate_conditions, explicit_toy,
                       random_circulant_toy, rn_identity_check,
                       rn_telescoping_check, sqrt_apply, toy_from_json)
from .weights import (WeightMode, WeightSchedule, build_weights, harmonic,
                      weighted_prefix)

__version__ = "0.1.0"
