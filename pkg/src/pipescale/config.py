"""
Configuration and default parameters for pipescale.

Defines the decision-loop timing, action grid, cooldowns, reward weights,
exploration schedule, retrieval parameters and price references.
Every scenario key that is omitted falls back to the value here.
"""

# Decision loop timing
DECISION_INTERVAL_S = 30.0  # One decision round
SETTLING_WINDOW_S = 20.0  # Discarded after actuation; reward uses the remainder
SIM_DT_S = 0.1  # Simulator step
STARTUP_DELAY_S = 15.0  # Replica scale-up readiness delay

# Resource bounds
N_MIN = 1
N_MAX = 8
RHO_MIN = 0.1
RHO_MAX = 1.0
CPU_MIN_MILLICORES = 100
CPU_MAX_MILLICORES = 16000
MEMORY_MIN_MB = 64
MEMORY_MAX_MB = 65536

# Action grid
GAMMA_C = 500  # CPU step, millicores
GAMMA_M = 256  # Memory step, MB
DELTA_N_GRID = (-1, 0, 1, 2)
DELTA_C_GRID = (-GAMMA_C, 0, GAMMA_C)
DELTA_M_GRID = (-GAMMA_M, 0, GAMMA_M)
DELTA_RHO_GRID = (-0.1, 0.0, 0.1, 0.2)

# Cooldowns (replica changes only)
SCALE_UP_COOLDOWN_S = 60.0
SCALE_DOWN_COOLDOWN_S = 120.0

# Service model
REFERENCE_CPU_MILLICORES = 1000  # c_ref: allocation at which the multiplier is 1
CPU_MULTIPLIER_MIN = 0.25
CPU_MULTIPLIER_MAX = 2.0
MEMORY_DEGRADATION = 0.5  # Service-rate factor below the memory floor

# GPU token bucket
TOKEN_WINDOW_MS = 10.0
TOKEN_T_MAX = 1000.0  # Work units per full-rate window

# Reward shaping
W_LATENCY = 0.7
W_COST = 0.3
W_PROACTIVE = 0.3
PROACTIVE_ALPHA = 0.5
R_MAX = 5.0
L_MAX_SLA_MULTIPLE = 4.0  # L_max = L_baseline = 4 x T_SLA
DEFAULT_SLA_MS = 500.0
DOMINATED_REWARD_SCALE = 0.8

# Experience store and retrieval
CONTEXT_SIZE_M = 15
R_MIN = 0.0
LAMBDA_DIV = 0.1
SIGMA_REFRESH_INTERVAL = 50  # Insertions between bandwidth refreshes
STAGE_FEATURES = ("n", "c", "m", "rho", "q", "u_cpu", "u_gpu")
GLOBAL_FEATURES = ("p99_ms", "throughput")

# Exploration schedule
EPSILON_0 = 0.15
EPSILON_DECAY = 0.95
EPSILON_MIN = 0.05

# Mock policy thresholds
MOCK_SCALE_UP_UTIL = 0.8
MOCK_SCALE_DOWN_UTIL = 0.3
MOCK_SCALE_DOWN_LATENCY_FRACTION = 0.5
MOCK_VETO_SIMILARITY = 0.9

# LLM client
LLM_TIMEOUT_S = 10.0
LLM_TEMPERATURE = 1.0
LLM_MAX_RETRIES = 1  # Re-asks after a malformed response
PROMPT_TOKEN_BUDGET = 6000
LLM_ENDPOINT_ENV = "PIPESCALE_LLM_ENDPOINT"
LLM_MODEL_ENV = "PIPESCALE_LLM_MODEL"
LLM_API_KEY_ENV = "PIPESCALE_LLM_API_KEY"

# Baselines
HPA_TARGET_UTIL = 0.70
HPA_STABILIZATION_S = 60.0
THRESHOLD_CPU_MS = 100.0
THRESHOLD_GPU_MS = 200.0
THRESHOLD_COOLDOWN_S = 60.0
THRESHOLD_SCALE_DOWN_FRACTION = 0.5
VPA_HEADROOM = 1.15
VPA_WINDOW = 5  # Decision intervals of usage history

# Prices (p3.2xlarge GPU, m5.xlarge CPU per core)
PRICE_GPU_HOUR = 3.06
PRICE_CPU_CORE_HOUR = 0.048

# Oracle
ORACLE_MAX_CANDIDATES = 32

# Bottleneck evaluation
BOTTLENECK_PROBE_EPSILON = 0.5
BOTTLENECK_MULTIPLE_TOLERANCE = 0.2  # Two stages within 20% count as "multiple"
BOTTLENECK_OBSERVE_S = 10.0

# Stage role names for 3-stage pipelines
DEFAULT_STAGE_NAMES = ("preprocessing", "inference", "postprocessing")
