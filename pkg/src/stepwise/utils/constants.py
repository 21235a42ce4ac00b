# Exit codes for the command suite:
EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_BAD_CONFIG = 3
EXIT_MISSING_CHECKPOINT = 4
EXIT_OUTPUT_EXISTS = 5

# Number of index variables held by the comparator interfaces:
NUM_VARIABLES = 4

# Functions available to the quick-sort interface (1 = QuickSort, 2 = Partition):
NUM_FUNCTIONS = 2

# Per-step penalty applied in every sorting and search episode:
DEFAULT_STEP_PENALTY = 0.01

# Extra call-stack headroom on top of 2 * n:
STACK_LIMIT_SLACK = 64

# Evaluation protocol:
DEFAULT_EVAL_EPISODES = 100
LONG_RUNNING_SIZE = 10000

# Task and interface names:
TASK_SORT = "sort"
TASK_SEARCH = "search"
TASK_KNAPSACK = "knapsack"
TASKS = (TASK_SORT, TASK_SEARCH, TASK_KNAPSACK)

INTERFACE_FULL_VIEW = "full-view"
INTERFACE_BUBBLE_INSERTION = "bubble-insertion"
INTERFACE_QUICK_SORT = "quick-sort"
INTERFACE_SEARCH = "search"
INTERFACE_KNAPSACK = "knapsack"
INTERFACES = (
    INTERFACE_FULL_VIEW,
    INTERFACE_BUBBLE_INSERTION,
    INTERFACE_QUICK_SORT,
    INTERFACE_SEARCH,
    INTERFACE_KNAPSACK,
)

# Reward modes for sorting:
REWARD_SPARSE = "sparse"
REWARD_SHAPING = "shaping"
REWARD_MODES = (REWARD_SPARSE, REWARD_SHAPING)

# Query samplers for the search task:
QUERY_MIXED = "mixed"
QUERY_MEMBER = "member"
QUERY_NON_MEMBER = "non-member"
QUERY_MODES = (QUERY_MIXED, QUERY_MEMBER, QUERY_NON_MEMBER)
# Share of member queries under the mixed sampler.  With arrays drawn from [0, n)
# this puts the binary-search teacher at about 4.0, 11.6 and 21.2 steps for
# n = 10, 100 and 1000.
MIXED_MEMBER_RATE = 0.9

# Run directory layout:
DEFAULT_RUN_ROOT = "runs"
MANIFEST_NAME = "manifest.json"
REPORT_NAME = "report.csv"
TRAINING_LOG_NAME = "training_log.csv"
CHECKPOINT_NAME = "checkpoint.stw"
LEADERBOARD_NAME = "leaderboard.csv"
CURVES_NAME = "curves.png"
TRACES_DIR = "traces"
