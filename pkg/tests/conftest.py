import math

import pytest
from hypothesis import strategies as st

from sbcool.core_model import PhysicalParams, published_dynamics_params

TWO_PI = 2 * math.pi


@st.composite
def physical_params(draw, delta_lc=None):
    omega = TWO_PI * draw(st.floats(0.3e6, 3e6))
    p = PhysicalParams(
        kappa=omega * draw(st.floats(0.02, 0.8)),
        omega=omega,
        gamma_sc=10 ** draw(st.floats(5, 7.5)),
        eta=10 ** draw(st.floats(-2, -0.3)),
        eta_ld_sq=draw(st.floats(0.003, 0.03)),
        c_factor=draw(st.floats(0.1, 1.0)),
        n_dot_ext=draw(st.floats(0, 200)),
    )
    if delta_lc is not None:
        p = p.replace(delta_lc=delta_lc * omega)
    return p


@pytest.fixture
def published():
    return published_dynamics_params()
