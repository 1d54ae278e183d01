# Analytical model of the six 1-D designs at five taps.
from sysc import gallery
from sysc.perf import analyze, percent, sig2, static_dynamic_crosscheck

print(f"{'design':<8} {'lanes':>5} {'steps':>5} {'outturn':>8} {'util':>5} {'regs':>5}  traced")
for key in gallery.ONE_D:
    d = gallery.instantiate(key, {"Q": 5, "CC": 4})
    r = analyze(d)
    check = static_dynamic_crosscheck(d)
    print(f"{key:<8} {r.lanes:>5} {r.time_steps:>5} {sig2(r.outturn):>8} "
          f"{percent(r.utilization):>5} {r.register_usage:>5}  {check.dynamic_utilization}")

# full report for one design
print(analyze(gallery.instantiate("ffs1d")).to_text())
