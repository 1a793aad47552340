"""Quick end-to-end check of the Python bindings."""

import cmath
import math
from fractions import Fraction

import collapse_lab as cl


def main():
    run = cl.collapse_ensemble([0.3, 0.7], n_trajectories=2000, seed=3)
    f = run.frequencies[0]
    assert f.within(0.3, 5.0), f
    assert run.worst_martingale_z < 5.0
    print("born frequency", f)

    num, den = cl.gamblers_win_probability(3000, 10000)
    assert Fraction(int(num), int(den)) == Fraction(3, 10)
    sim = cl.gamblers_simulate([0.3, 0.7], 0.05, n_games=4000, seed=2)
    assert sim[0].within(0.3, 5.0), sim[0]
    print("gambler win frequency", sim[0])

    model = cl.CommutingCsl([0.0, 1.0], 1.0, 0.02, 100)
    c0 = [complex(math.sqrt(0.3)), complex(math.sqrt(0.7))]
    rho = model.density_matrix(c0, 2.0)
    assert abs(abs(rho[1]) - math.sqrt(0.21) * math.exp(-1.0)) < 1e-12
    ens = model.ensemble(c0, n_trajectories=5000, seed=4, record_stride=100)
    z = abs(abs(ens["rho01"][-1]) - abs(rho[1])) / ens["rho01_stderr"][-1]
    assert z < 5.0, z
    print("csl |rho01| at t=2", abs(ens["rho01"][-1]), "closed form", abs(rho[1]))

    dev = cl.CommutingCsl.unitary_check([0, 0.5, 0.5, 1], 2, 1.0, 0.1, 1.0, 64)
    assert dev < 1e-8, dev
    print("unitary reconstruction error", dev)

    t, left = cl.sl_entangled_collapse(n_runs=500, sites=160, seed=5)
    assert t.within(0.5, 5.0), t
    print("entangled collapse time", t, "left branch", left)

    p = cl.hidden_up_probability(math.pi / 2)
    assert abs(p - 0.5) < 1e-6
    mc = cl.hidden_up_frequency(math.pi / 3, n_samples=20000, seed=6)
    assert mc.within(cl.hidden_up_probability(math.pi / 3), 5.0)
    print("hidden-variable P(up, pi/3)", mc)

    try:
        cl.CommutingCsl([0.0, 1.0], -1.0, 0.02, 10)
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("negative lambda accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
