"""Majorant-series laboratory for oscillatory instability of initially
elliptic first-order systems.

The package builds truncated-series calculus (a comparison envelope with a
self-dominating square), weighted oscillatory function spaces, per-mode
propagators with verified growth bounds, a Picard solver for the oscillatory
fixed-point equation, and an epsilon-sweep harness measuring how the
solution-to-data ratio between an L2 norm on shrinking cones and a
Gevrey-type data norm evolves.
"""

from .kernels import backend_name
from .series import (ModelMajorant, PowerSeriesX, UniversalConstants,
                     default_constants, derive_c0, derive_c1, majorizes,
                     phi_coefficient, ps_derive, ps_mul)
from .spaces import (SpaceFrame, SpaceNormParams, TimeBudget, TrigSeries,
                     apply_dtheta, apply_dx, growth_time, norm_e, norm_es,
                     ts_product, weight)
from .symbol import (RateCase, SymbolFamily, SymbolSpectrum,
                     check_ellipticity, check_quadratic_source,
                     check_semisimple_noncoalescing, classify,
                     compute_mu_and_check_sign, gevrey_ceiling, make_rates)
from .propagator import (PropagatorModes, apply_propagator, duhamel_apply,
                         integrate_modes, verify_growth_bound)
from .solver import (FreeSolution, PicardState, SourceOperators,
                     build_free_solution, lower_bound_check, picard_solve)
from .metrology import (ScenarioParams, gevrey_norm_oscillatory,
                        instability_ratio, l2_norm_on_cone,
                        select_parameters)
from .models import get_model

__version__ = "0.1.0"
