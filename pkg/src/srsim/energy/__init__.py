from .term import EnergyTerm, combine
from .spd import spd_project
from .barrier import (
    BarrierParams,
    KAPPA_GROWTH_CAP,
    adapt_kappa,
    barrier,
    barrier_sq,
    kappa_init,
)
from .terms import inertia_term, inertia_value, orthogonality_term
from .elastic import (
    deformation_gradients,
    elastic_energy_density,
    elastic_term,
    elastic_value,
)
from .shell import bending_term, hinge_stencils, shell_components, shell_term, shell_value
from .contact import (
    EE_MOLLIFIER_SCALE,
    ContactIndex,
    ContactStats,
    contact_energy,
    lift_stencil,
    merge_terms,
)
from .friction import FrictionLags, f0, f1, friction_term, update_friction_lags
