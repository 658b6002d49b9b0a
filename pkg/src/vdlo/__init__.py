"""Upper-bound limit analysis by discontinuity layout optimization on
elastic stress snapshots: smoothing, candidate enumeration, LP solve."""

from .mesh import (Material, Mesh, MeshError, load_mesh, locate_element,
                   mesh_from_dict, mesh_to_dict, save_mesh, segment_blocked)
from .fem import (FemError, FemState, LoadCase, NewmarkIntegrator,
                  SingularSystemError, assemble_mass, assemble_stiffness,
                  edge_traction_forces, element_mass, element_stiffness,
                  gauss_point_stresses, load_case_from_dict, load_load_case,
                  newmark_step, solve_static)
from .recovery import (RecoveryError, SmoothingSystem, build_smoothing_system,
                       load_nodal_stresses, recover_nodal_stresses,
                       save_nodal_stresses, stress_at_point)
from .candidates import (Candidate, CandidateError, CandidateTables, Quadrature,
                         classify, compute_coefficients, dissipation_coefficient,
                         dump_candidates, effective_friction, enumerate_candidates,
                         simpson_points, work_coefficients)
from .lp import (LinearProgram, LpError, LpSolution, StructurallyStable,
                 assemble_lp, compatibility_block, flow_block, register_solver,
                 solution_residuals, solve_lp, write_mps)
from .analysis import (AnalysisError, PatternEntry, Snapshot, SnapshotPipeline,
                       VdloOptions, VdloResult, failure_pattern, limit_quantity,
                       run_pseudostatic, run_snapshot, static_snapshot)
from .render import RenderError, channel_value, render_pattern_svg, render_stress_ppm

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
