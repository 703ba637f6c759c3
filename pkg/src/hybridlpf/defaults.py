"""Numeric defaults in one place.

Every tunable default used by the library and the command line is listed
here with a short note, so choices that the method leaves open can be
audited together. Modules import their defaults from this table.
"""

# power-flow oracle
PF_TOL = 1e-10            # max voltage step (p.u.) at convergence
PF_MAX_ITER = 200         # fixed-point iteration cap
PF_MISMATCH_TOL = 1e-9    # max power mismatch (p.u.) accepted at convergence
COLLAPSE_GUARD = 1e-6     # |v| below this is treated as voltage collapse
COND_LIMIT = 1e13         # cond(Yll) above this is reported as singular

# sampling
SCALE_RANGE = (0.5, 1.5)  # per node-phase load factor, drawn uniformly
LIGHT_SCALE = 0.1         # uniform load scaling of the light anchor state
HEAVY_SCALE = 1.5         # uniform load scaling of the heavy anchor state
TRAIN_COUNT = 100
TEST_COUNT = 900

# bad-data magnitude ranges (p.u.)
BAD_DATA_RANGES = {
    "near_zero": (1e-3, 1e-2),
    "over_three": (3.0, 3.5),
    "over_1p5": (1.5, 1.8),
    "under_0p5": (0.2, 0.5),
}

# trainer
HUBER_DELTA_QUANTILE = 0.9  # auto delta: this quantile of the current residual norms
IRLS_MAX_ITER = 200
IRLS_TOL = 1e-10            # max change of mu (and relative change of auto delta) per pass
MU_WARN = 10.0              # |mu| above this is logged as suspicious
ZIP_SUM_TOL = 1e-9          # tolerance on a + b + c = 1

# support range
VOLTAGE_FORM = "tangent"
POWER_FORM = "model"
FME_MAX_VARIABLES = 12
FME_MAX_ROWS = 200_000
LP_PIVOT_TOL = 1e-11
LP_FEAS_TOL = 1e-9
ACCURATE_MAX_ITER = 200
ACCURATE_TOL = 1e-10        # relative objective gain that ends the sequential LP
ACCURATE_FEAS_TOL = 1e-10   # relative limit violation accepted for an iterate
ACCURATE_BISECTION_STEPS = 40
ACCURATE_TRUST_RADIUS = 0.05


def table():
    """``(name, value)`` pairs of every default, in declaration order."""
    return [(k, v) for k, v in globals().items() if k.isupper()]
