"""Walk through one checksum-protected sparse product.

A 5x5 grid Laplacian is multiplied by a random vector three times: once
clean, once with a bit flipped in a stored value (the detection-only scheme
notices), and once more under the three-checksum scheme, which puts the
value back and returns the fault-free result.
"""

import numpy as np

from abftcg.abft import compute_checksums, protected_spmxv, select_scheme
from abftcg.faults import apply_flip
from abftcg.sparse import generate_test_matrix, spmxv_plain

A = generate_test_matrix("laplacian2d", 5)
x = np.random.default_rng(0).uniform(-1.0, 1.0, A.n)
y_ref = spmxv_plain(A, x)
print(f"matrix order {A.n}, {A.nnz} stored entries; cheaper detector: {select_scheme(A)}")

detect = compute_checksums(A, "shift")
out = protected_spmxv(A, x, detect)
print(f"clean product: status={out.status}, threshold {out.tau_ref:.2e}")

hit = A.copy()
before = hit.val[7]
apply_flip(hit.val, 7, 52)          # lowest exponent bit: the value doubles or halves
print(f"val[7] flipped from {before} to {hit.val[7]}")
out = protected_spmxv(hit, x, detect)
print(f"shifted-checksum product: status={out.status}")

correct = compute_checksums(A, "multi", 3)
out = protected_spmxv(hit, x, correct, correct=True)
print(f"three-checksum product: status={out.status} at {out.location}; "
      f"val[7] is back to {hit.val[7]}; result bit-identical: "
      f"{np.array_equal(out.y, y_ref)}")

# a change below the rounding threshold is not worth a rollback
tiny = A.copy()
apply_flip(tiny.val, 7, 10)
out = protected_spmxv(tiny, x, detect)
err = np.max(np.abs(out.y - y_ref))
print(f"low mantissa bit flip: status={out.status}, output off by {err:.1e} "
      f"(threshold {out.tau_ref:.1e})")
