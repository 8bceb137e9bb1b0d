"""Time the compiled kernels against the plain numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time through ``EXOSIM_DISABLE_JIT``.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
import exosim
from exosim.multibody import BodySpec, Joint, aba, build_model, crba, rnea
from exosim.muscle import TorqueMuscle
from exosim.ocp import Cost, OcProblem, Stage, integrate_segment
from exosim.scenario import bundled_scenario, parse_scenario
from exosim.spatial import SpatialInertia, SpatialTransform

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
body_specs = []
for b in range(10):
    axis = rng.normal(size=3)
    joint = Joint("revolute", (tuple(axis / np.linalg.norm(axis)),), b - 1,
                  SpatialTransform(np.eye(3), [0.0, 0.0, -0.3]))
    body_specs.append(BodySpec(f"b{b}", joint, SpatialInertia.from_com(1.0, [0, 0, -0.15], 0.01 * np.eye(3))))
model = build_model(body_specs)
q, qd, qdd = (rng.normal(size=model.nv) for _ in range(3))
muscles = (TorqueMuscle("ag", 0, 1, 30.0), TorqueMuscle("an", 0, -1, 30.0))
problem = OcProblem(model, muscles, [Stage("s", (1.0, 1.0), 1, 100)], Cost())
x0 = np.concatenate([q, qd, [0.2, 0.1]])
nlp = parse_scenario(bundled_scenario("pendulum_reach")).transcribe()
z = nlp.initial_guess()

cases = {
    "rnea (10 bodies)": lambda: rnea(model, q, qd, qdd),
    "aba (10 bodies)": lambda: aba(model, q, qd, qdd),
    "crba (10 bodies)": lambda: crba(model, q),
    "rk4 segment (100 steps)": lambda: integrate_segment(problem, 0, x0, [0.5, 0.1], [0.2, 0.4], 0.1, 100),
    "pendulum NLP derivatives": lambda: nlp.derivatives(z),
}
out = {"jit": exosim.JIT_ENABLED, "times": {}}
for name, fn in cases.items():
    fn()  # compile / warm caches
    n = max(1, repeat // 20) if "NLP" in name else repeat
    start = time.perf_counter()
    for _ in range(n):
        fn()
    out["times"][name] = (time.perf_counter() - start) / n
print(json.dumps(out))
"""


def run(disable_jit, repeat):
    env = dict(os.environ)
    env.pop("EXOSIM_DISABLE_JIT", None)
    if disable_jit:
        env["EXOSIM_DISABLE_JIT"] = "1"
    r = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True,
                       text=True, check=True)
    return json.loads(r.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200, help="calls per kernel (default 200)")
    args = ap.parse_args(argv)
    jit, plain = run(False, args.repeat), run(True, args.repeat)
    if not jit["jit"]:
        print("warning: numba unavailable, both columns use the fallback", file=sys.stderr)
    print(f"{'kernel':28s} {'jit [ms]':>10s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for name, t_jit in jit["times"].items():
        t_np = plain["times"][name]
        print(f"{name:28s} {1e3 * t_jit:10.3f} {1e3 * t_np:11.3f} {t_np / t_jit:8.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
