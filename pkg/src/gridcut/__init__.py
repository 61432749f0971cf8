"""Cut-set saturation screening and corrective redispatch for transmission grids."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .cascade import CascadeResult, find_cascade_triggers, simulate_cascade
from .dispatch import (CutConstraint, DispatchProblem, DispatchSolution,
                       apply_dispatch, build_problem,
                       cut_constraints_from_screening, solve, verify_solution)
from .errors import (BranchStateError, CaseFormatError, GridcutError,
                     InfeasibleFlowError, InfeasibleRedispatchError,
                     IslandedNetworkError, SnapshotMismatchError,
                     SolverError, UnknownBranchError)
from .flowgraph import (AugmentingPath, FlowState, InjectionDelta,
                        build_flow_state, cut_transfer, flow_state_from_flows,
                        shortest_unsaturated_path, update_after_outage,
                        update_after_redispatch)
from .model import (Branch, Bus, Generator, Load, Network, ValidationReport,
                    apply_outage, load_case, parse_case, serialize_case,
                    validate)
from .orchestrator import (ScenarioConfig, ScenarioEvent, ScenarioReport,
                           Session, StepRecord, choose_solution, run_scenario)
from .rtca import (RankedContingency, Violation, ViolationList,
                   rank_contingencies, screen_post_contingency,
                   select_top_fraction)
from .screening import (FTResult, ScreeningResult, SpecialAssetSet,
                        brute_force_cutset_oracle, feasibility_test,
                        refresh_after_outage, refresh_after_redispatch,
                        screen_all, shortlist_after_outage,
                        shortlist_after_redispatch)
from .sensitivity import (LodfMatrix, PtdfMatrix, compute_lodf, compute_ptdf,
                          dc_power_flow, post_contingency_flows)

__version__ = "0.1.0"
