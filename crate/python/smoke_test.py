#!/usr/bin/env python3
"""Smoke test for the fock_dimers extension module.

Builds the cdylib with cargo, copies it next to this script under the
importable name, and exercises the main surface: model construction, the
Kasteleyn condition, the spectral curve, Gibbs probabilities and the
thermodynamic identities.
"""

import json
import math
import pathlib
import shutil
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build_module() -> None:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "fock-dimers-py"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libfock_dimers.so"
    if not built.exists():  # e.g. macOS
        built = ROOT / "target" / "release" / "libfock_dimers.dylib"
    target = pathlib.Path(__file__).parent / "fock_dimers.so"
    shutil.copyfile(built, target)


def approx(a: float, b: float, tol: float = 1e-8) -> None:
    assert abs(a - b) < tol, f"{a} vs {b}"


def main() -> None:
    build_module()
    sys.path.insert(0, str(pathlib.Path(__file__).parent))
    import fock_dimers

    # theta sanity: sum over Z of exp(-pi n^2) for Omega = i
    v = fock_dimers.theta([0j], [[1.0]])
    approx(v.real, 1.0864348112133080, 1e-12)
    approx(v.imag, 0.0, 1e-14)

    # the packaged genus-1 periodic model
    m = fock_dimers.Model.packaged("square_skew")
    print(m)
    assert m.genus == 1 and m.periodic
    assert m.kasteleyn_deviation() < 1e-10

    # spectral point lies on the curve
    z, w = m.spectral_point(1, 0.37)
    assert abs(m.char_poly_eval(z, w)) < 1e-9

    # probabilities: per-white sums are 1 in a gaseous phase
    gas = json.dumps({"oval": 1, "s": 0.23})
    edges = m.edges()
    whites = sorted({e[0] for e in edges})
    for white in whites:
        total = sum(
            m.edge_probability(gas, i) for i, e in enumerate(edges) if e[0] == white
        )
        approx(total, 1.0, 1e-8)

    # solid phase freezes a perfect matching
    tracks = m.tracks()
    angles = sorted(t[3] for t in tracks)
    gap = (angles[0] + angles[1]) / 2
    solid = json.dumps({"oval": 0, "s": gap})
    probs = [m.edge_probability(solid, i) for i in range(m.n_edges)]
    assert all(p in (0.0, 1.0) for p in probs)
    assert sum(probs) == len(whites)

    # Legendre identity at a liquid point
    liquid = json.dumps({"interior": {"s_cross": gap, "depth": 0.3}})
    tension, free_energy, (s, t), (bx, by) = m.thermodynamics(liquid, solid)
    approx(free_energy, s * bx + t * by - tension, 1e-6)
    # free energy tracks the Ronkin function of the spectral curve
    assert abs(free_energy - m.ronkin(bx, by, 256)) < 5e-4
    assert m.amoeba_contains(bx, by)

    # torus partition functions are positive and finite
    z1 = m.torus_partition_function(1, 0.0, 0.0)
    z2 = m.torus_partition_function(2, 0.0, 0.0)
    assert z1 > 0 and z2 > 0 and math.isfinite(z1) and math.isfinite(z2)

    # the genus-2 instance: two distinct marked interior points
    m2 = fock_dimers.Model.packaged("square_octagon_genus2")
    print(m2)
    pts = m2.phi_points()
    assert len(pts) == 2 and pts[0] != pts[1]
    assert m2.kasteleyn_deviation() < 1e-8
    div = m2.divisor_of_vertex(0)
    assert [oval for oval, _ in div] == [1, 2]

    # JSON round trip
    m3 = fock_dimers.Model.from_json(m.to_json())
    assert m3.n_edges == m.n_edges
    assert math.isclose(
        m3.edge_probability(gas, 0), m.edge_probability(gas, 0), abs_tol=1e-12
    )

    print("smoke test passed")


if __name__ == "__main__":
    main()
