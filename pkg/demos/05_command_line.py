"""
Driving experiments from the command line
=========================================

The ``ivehalf`` command (also ``python -m ivehalf``) wraps the library in four
verbs: ``synth`` writes a scenario directory, ``extract`` runs one algorithm,
``sweep`` tabulates final SIR over several DFT lengths and ``plot`` renders
trace files.  Here we call the same entry point from Python.
"""

import os

from ivehalf.cli import main

out = os.environ.get("IVEHALF_OUTDIR", "demo_output")
scen = os.path.join(out, "scenario")

main(["synth", "--out", scen, "--d", "2", "--n-samples", "32000", "--seed", "1",
      "--filter-len", "32"])

for alg in ("hive", "ogive"):
    main(["extract", "--scenario", scen, "--algorithm", alg, "--fft-len", "256",
          "--max-iter", "150", "--trace", os.path.join(out, f"{alg}.csv"),
          "--audio", os.path.join(out, f"{alg}.wav")])

main(["plot", os.path.join(out, "hive.csv"), os.path.join(out, "ogive.csv"),
      "--out", os.path.join(out, "cli_plot.svg")])

main(["sweep", "--scenario", scen, "--fft-lens", "64,128,256", "--max-iter", "200",
      "--out", os.path.join(out, "sweep.csv")])
print(open(os.path.join(out, "sweep.csv")).read())
