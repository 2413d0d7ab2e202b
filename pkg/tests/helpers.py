"""Small shared builders for the test-suite."""
import numpy as np

from periodic_cns.config import RunConfig, zero_data_config
from periodic_cns.driver import build_problem


def small_config(n=4, steps=40, **changes):
    cfg = RunConfig(n=n).replace(**{"stepper.steps_per_period": steps,
                                    "regularization.lambda_bar": 50.0})
    return cfg.replace(**changes)


def small_problem(n=4, steps=40, **changes):
    return build_problem(small_config(n, steps, **changes))


def zero_problem(n=4, steps=20, **changes):
    return build_problem(zero_data_config(n=n, **{"stepper.steps_per_period": steps, **changes}))


def random_state(space, rng, mean=0.35, rho_scale=0.03, v_scale=0.2, time=0.0):
    """Smooth random state whose density stays inside (0, rho_max - delta)."""
    n = space.n
    fx = np.r_[0, np.repeat(np.arange(1, n + 1), 2)]
    ds = 0.5 ** (fx[:, None] + np.arange(n + 1)[None, :]).ravel()
    dv = np.tile(0.5 ** (fx[:, None] + np.arange(1, n + 1)[None, :]).ravel(), 2)
    s = space.zero_state(time)
    s.density = space.constant_density(mean) + rho_scale * ds * rng.standard_normal(ds.size)
    s.density[0] = mean * np.sqrt(space.domain.area)
    s.velocity = v_scale * dv * rng.standard_normal(dv.size)
    return s


# one line per acceptance criterion, printed by the terminal summary hook
ACCEPTANCE = []


def record(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok
