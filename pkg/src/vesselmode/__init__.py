"""Modal analysis of periodic Stokes flow in straight vessels with rigid or elastic walls."""

__version__ = "0.1.0"

from .errors import (CertificateFailure, CompatibilityError, ConfigError, DomainError,  # noqa: F401
                     GeometryError, IncompatibilityError, InsufficientDataError,
                     InterfaceError, MaterialError, MeshError, NearEigenvalueError,
                     RefinementError, RegularityError, UnsupportedParameterError,
                     VesselModeError)
from .geometry import BoundaryCurve, CrossSectionMesh, build_boundary, mesh_domain  # noqa: F401
from .modal_stokes import (FluidParams, disk_oracles, solve_poiseuille,  # noqa: F401
                           solve_womersley_mode)
from .wall_model import WallMaterial, static_wall_solve  # noqa: F401
from .elastic_coupling import (assemble_elastic_pencil, assemble_rigid_pencil,  # noqa: F401
                               solve_modal_coupled)
from .spectral_analysis import (StripScanConfig, estimate_beta_star,  # noqa: F401
                                locate_eigenvalues_in_strip, sigma_min_landscape)
from .flowsynth import (PressureWaveform, certify_elastic_rigidity,  # noqa: F401
                        decompose_waveform, synthesize_rigid_periodic)
