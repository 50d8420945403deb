from decouple import config

STATSD_HOST = config("statsdHost", default="localhost")
STATSD_PORT = config("statsdPort", default=8125, cast=int)

OPTIMIZER_TOL = config("OPTIMIZER_TOL", default=1e-7, cast=float)
OPTIMIZER_ITERATIONS_PER_POINT = config(
    "OPTIMIZER_ITERATIONS_PER_POINT", default=200, cast=int
)
PRUNE_BELOW = config("PRUNE_BELOW", default=1e-3, cast=float)
NU_GRID_POINTS = config("NU_GRID_POINTS", default=101, cast=int)
VERIFY_RANDOM_DESIGNS = config("VERIFY_RANDOM_DESIGNS", default=10, cast=int)
OUTPUT_DIR = config("OUTPUT_DIR", default="robust_design_out")
