"""Joint selection of control nodes and open-loop control design for
nonlinear oscillator networks."""
from .config import ExperimentSpec, load_config
from .integrate import Scheme, simulate
from .models import DuffingNetwork, MemoryNetwork
from .objective import CostSpec, check_gradient, control_error, cost_J
from .optimize import BudgetMode, Selection, mino_search, round_selection
from .pipelines import (algorithm1, error_vs_steps, exhaustive_baseline,
                        random_baseline, relax_round_pipeline)

__version__ = "0.1.0"
