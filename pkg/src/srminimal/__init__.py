"""Sub-Riemannian minimal surfaces from an orthonormal horizontal frame."""
from .characteristics import (
    ExtendedState,
    closed_form_e2,
    closed_form_h1,
    closed_form_h1_standard,
    integrate_characteristic,
    integrate_characteristics,
    ruled_condition,
    sweep_surface,
)
from .errors import ConfigError, DomainError, GeometryError
from .expr import differentiate, evaluate, parse_expression, to_string
from .geodesics import (
    GeodesicState,
    angle_condition_residual,
    classify_group_case,
    integrate_geodesic,
    integrate_geodesics,
    is_characteristic_geodesic,
    phi_star,
    sr_length,
)
from .mesh import SurfaceMesh
from .presets import heisenberg, preset, rototranslation
from .structure import (
    SRStructure,
    canonical_one_form,
    canonical_volume,
    contact_check,
    jacobi_residuals,
    lie_bracket,
    reeb_field,
    structural_constants,
)
from .surface import (
    LevelSurface,
    classify_characteristic_point,
    cylinder_volume_rate,
    find_characteristic_points,
    horizontal_area,
    horizontal_normal,
    minimal_residual,
)

__version__ = "0.1.0"
