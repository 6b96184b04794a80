"""Searching a tabular architecture benchmark.

Cells are seven-vertex DAGs encoded by their 21 upper-triangle edges.  The
synthetic table has a known best cell, so a run can be scored by whether
it found it.
"""

from discrete_abc import EpsilonSchedule, KernelSpec, RngStream, run
from discrete_abc.problems import NasProblem, nas_encode, nas_synth_table

table = nas_synth_table(RngStream(8, ("nas-table",)))
best, best_val = table.global_minimum()
print(f"{len(table)} valid cells; best validation error {best_val:.4f}")
print(nas_encode(best))

prob = NasProblem(table)
for kind in ("dde-mc", "ind-samp"):
    found, seen = None, 1.0
    for st in run(prob, KernelSpec(kind, p_flip=0.01), EpsilonSchedule.exponential(0.2), 3000,
                  RngStream(1, (kind,)), size=24):
        seen = min(seen, min(st.errors))
        if found is None and seen <= best_val:
            found = st.iteration
    print(f"{kind:>9}: best seen {seen:.4f}, optimum found at sweep {found}")
