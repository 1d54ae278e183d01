# Rank every small unimodular transform of the stationary-output recurrences.
import time

from sysc import gallery
from sysc.explore import explore

t0 = time.perf_counter()
result = explore(gallery.instantiate("sbm1d"), bound=2, overrides={"CC": 4}, trials=3)
print(result.to_text())
print(f"{time.perf_counter() - t0:.1f} s")

best = result.candidates[0]
print("best:", [list(r) for r in best.matrix], best.report.pattern)
print("worked example:", result.find([[1, 1], [0, 1]]).report.to_text())
