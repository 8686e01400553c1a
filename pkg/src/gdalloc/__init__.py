"""Compact allocation plans for guaranteed-delivery serving on weighted
bipartite graphs: greedy and iterative dual-descent allocators, online
serving reconstruction, replay simulation, metrics, and a small-instance
optimality oracle."""

from .allocators import (AllocationPlan, DualState, PlanEntry, allocation_from_plan,
                         allocation_order, cold_state, converge, hwm, load_plan,
                         projected_delivery, save_plan, shale, shale_stage_one,
                         shale_stage_two, stage_one_step, supply_duals, warm_state)
from .metrics import (MetricsReport, asc, compile_report, l2_distance, objective,
                      pacing, penalty_cost, under_delivery_rate, write_report)
from .model import (Allocation, ArcStore, DataError, DemandNode, Instance,
                    SupplyNode, generate_synthetic, load_instance, save_instance)
from .oracle import KktResidual, OracleError, kkt_check, reconstruct_primal, solve_qp_reference
from .pwl import (NO_SOLUTION, GTerm, PwlSolution, g, solve_alpha, solve_beta,
                  solve_zeta_capped, solve_zeta_hwm)
from .serving import (DeliveryStats, ImpressionEvent, ServingContext, forecast_log,
                      load_log, replay, save_log, save_stats, serve_impression)

__version__ = "0.1.0"
