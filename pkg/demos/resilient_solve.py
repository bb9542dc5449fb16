"""Solve one system under a stream of bit flips with each protection method.

Every method sees the same faults (same seed).  Time is counted in units of
one plain iteration, so the numbers do not depend on the machine.
"""

from abftcg.harness import Problem, model_interval, run_solve
from abftcg.pcg import inverse_factor
from abftcg.sparse import generate_test_matrix

A = generate_test_matrix("laplacian2d", 16)
prob = Problem(A, inverse_factor(A, shift=2.0))
alpha = 1 / 8          # expected faults per iteration
print(f"grid Laplacian of order {A.n}, {alpha} faults per iteration on average\n")
print(f"{'method':18} {'s':>3} {'d':>3} {'iters':>5} {'run':>5} {'rollbk':>6} "
      f"{'fixed':>5} {'time':>7}  converged")
clean = run_solve(prob, "none", 0.0)
print(f"{'fault-free':18} {'':>3} {'':>3} {clean.iters:5d} {clean.iters_executed:5d} "
      f"{'':>6} {'':>5} {clean.wall_units:7.1f}  {clean.converged}")
for method in ("none", "online_detection", "abft_detection", "abft_correction"):
    s, d = (1, 1) if method == "none" else model_interval(prob, method, alpha)[:2]
    rep = run_solve(prob, method, alpha, seed=3, s=s, d=d)
    print(f"{method:18} {s:3d} {d:3d} {rep.iters:5d} {rep.iters_executed:5d} "
          f"{rep.rollbacks:6d} {rep.corrections:5d} {rep.wall_units:7.1f}  {rep.converged}")
print("\nWithout protection the corrupted run drifts; detection pays with re-executed")
print("iterations, correction repairs most faults in place and rarely rolls back.")
