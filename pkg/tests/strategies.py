import numpy as np
from hypothesis import strategies as st

from zrpmeta.walk import random_spec


@st.composite
def specs(draw, min_kappa=2, max_kappa=6):
    k = draw(st.integers(min_kappa, max_kappa))
    seed = draw(st.integers(0, 2**32 - 1))
    density = draw(st.floats(0.0, 1.0))
    return random_spec(k, np.random.default_rng(seed), density)


@st.composite
def configurations(draw, N, kappa):
    cuts = sorted(draw(st.lists(st.integers(0, N), min_size=kappa - 1, max_size=kappa - 1)))
    edges = [0, *cuts, N]
    return np.diff(edges).astype(np.int64)
