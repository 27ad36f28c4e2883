"""
Files and the command line
==========================

Solutes come from PQR files, surfaces from OFF or flat-tri files, and run
settings from a small ``key = value`` configuration.  The same pieces drive
the ``biobem`` command.
"""

import tempfile
from pathlib import Path

from biobem import Solute, icosphere, load_mesh
from biobem.cli import main
from biobem.io import load_pqr, parse_config, save_pqr
from biobem.mesh import save_off

work = Path(tempfile.mkdtemp())

# a two-charge solute inside a 3 A sphere, written out and read back
save_pqr(Solute([(0, 0, 0.8), (0, 0, -0.8)], [0.5, -0.5], [1.5, 1.5]), work / "dipole.pqr")
save_off(icosphere(3.0, 2), work / "sphere.off")
(work / "run.cfg").write_text(
    "[dielectric]\neps_p = 2\neps_w = 80\neps_inf = 1.8\nlambda_w = 3\n\n[solver]\ntol = 1e-10\n"
)
print(load_pqr(work / "dipole.pqr"))
print(load_mesh(work / "sphere.off"))
print(parse_config((work / "run.cfg").read_text()).dielectrics, "\n")

# %%
# One solve per model, a sweep over the correlation length, and the error
# against the sphere solution as the surface is refined.
common = ["--pqr", str(work / "dipole.pqr"), "--mesh", str(work / "sphere.off"), "--config", str(work / "run.cfg")]
main(["solve", "pcm", *common])
main(["solve", "nonlocal", *common])
main(["sweep", "--param", "lambda_w", "--values", "0,1,10", *common])
main(["convergence", "nonlocal", "--subdivisions", "1,2,3", "--radius", "3",
      "--pqr", str(work / "dipole.pqr"), "--config", str(work / "run.cfg")])
