"""
Central configuration for the intervention engine
ALL values configurable & override-friendly
"""

# Sampling period (minutes) of the step-count model
SAMPLING_MINUTES = 15

# Daily intervention window (24h clock, local time)
WINDOW_START = "09:00"
WINDOW_END = "19:00"

# Burden constraints
MAX_MESSAGES = 6          # alpha
SPACING_STEPS = 2         # at most one message in any run of this many steps
BETA_FRACTION = 0.6       # default beta = BETA_FRACTION * alpha * max_k c_k

# Time-of-day cost ramp (linear, first step -> last step)
C_TIME_START = 1.0
C_TIME_END = 0.2

# Illustrative hourly step averages for the 09:00-19:00 window (one entry per hour).
# Only the shape matters: c_step is normalized by the maximum.
DEFAULT_HOURLY_AVERAGES = [
    118.0, 152.0, 171.0, 206.0, 189.0, 140.0, 133.0, 164.0, 211.0, 157.0,
]

# Goal = mean of daily window totals + increment
GOAL_INCREMENT = 500.0
REFERENCE_GOAL = 6016.0

# Scenario sampling
N_SCENARIOS = 100
ANALYTIC_FALLBACK_SCENARIOS = 10000

# Synthetic measurements (per 15-minute step)
MU_WINDOW = 137.0
SIGMA_WINDOW = 51.0

# Activity presets -> multiplier on MU_WINDOW
PRESET_MULTIPLIERS = {
    "regular": 1.0,
    "low": 0.3,
    "high": 1.5,
}

# Solver guards and tolerances
BRUTE_FORCE_LIMIT = 10 ** 7
BIG_M_FLOOR = 1.0
BUDGET_TOL = 1e-9
BOUND_TOL = 1e-9

# Probability level treated as "goal practically secured" in sweeps
SATURATION_LEVEL = 0.95
