"""Numerical laboratory for excursion sets of random holomorphic sections.

Modules
-------
geometry   model manifolds, meshes, quadrature
sections   section bases, Gram matrices, orthonormalization
kernel     Szegő kernel, normalized kernel, E and its derivatives
embedding  Kodaira embedding, normal-slice distances, critical radius
chern      closed-form expected Euler characteristics
excursion  random sections, excursion topology, Monte Carlo
cli        command-line interface
"""

__version__ = "0.1.0"

from ._validation import ChartPoint, ValidationError
from .chern import (
    CohomologyClass,
    FormulaResult,
    RingSpec,
    expected_chi_curve,
    h0_dimension,
    leading_term,
    ring_eval_expected_chi,
    tube_volume_curve,
)
from .embedding import (
    GEOMETRIC,
    KERNEL,
    CriticalRadiusReport,
    NormalSliceResult,
    ProjectivePoint,
    critical_radius,
    fs_distance,
    kodaira_point,
    normal_slice_distance,
    project_from_tangent,
    restrict_to_line,
    tangent_infinity,
)
from .excursion import (
    CoefficientVector,
    MCReport,
    component_count,
    field_on_mesh,
    mc_run,
    sample_coefficients,
    sup_refine,
    superlevel_euler,
)
from .geometry import (
    ELLIPTIC,
    PROJECTIVE,
    Geometry,
    GeometrySpec,
    QuadratureRule,
    TriMesh,
    build_mesh,
    curvature_form,
    make_geometry,
    quadrature_rule,
)
from .kernel import (
    AsymptoticReport,
    FrameVector,
    KernelDerivs,
    e_derivatives,
    frame_vector,
    gaussian_check,
    normalized_kernel,
    szego_diag,
    tyz_check,
)
from .sections import GramMatrix, OrthonormalBasis, RawBasis, gram_matrix, orthonormal_basis, orthonormalize, raw_basis
