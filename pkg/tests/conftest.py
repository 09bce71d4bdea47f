import numpy as np
import pytest

from latent_unmix.evaluation import draw_well_conditioned
from latent_unmix.observations import default_spec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def draw_pcfg_ie_case(family, rng, margin=0.02):
    """A PCFG-IE parameter together with a (1, tau) thin-triple spec, both well separated."""
    d = family.d
    while True:
        spec = default_spec("all-thin-triples", d, "both", seed=int(rng.integers(2**31)))
        try:
            params = draw_well_conditioned(family, rng, margin=margin, tau=spec.eta("tau"), max_tries=200)
        except RuntimeError:
            continue
        return spec, params
