"""Regenerate the bundled H2/STO-3G FCIDUMP files.

Requires pyscf, which is NOT a runtime dependency of symvqe. Run once:

    python tools/make_h2_integrals.py src/symvqe/data/h2

Also writes ``fci_energies.json`` (total FCI energy per distance) which the
test-suite uses as an external cross-check of exact diagonalization.
"""

import json
import sys
from pathlib import Path

from pyscf import fci, gto, scf
from pyscf.tools import fcidump

DISTANCES = [round(0.3 + 0.1 * i, 1) for i in range(23)] + [0.735]


def main(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    energies = {}
    for d in sorted(DISTANCES):
        mol = gto.M(atom=f"H 0 0 0; H 0 0 {d}", basis="sto-3g", unit="Angstrom", verbose=0)
        mf = scf.RHF(mol).run()
        path = outdir / f"d{d:.3f}.fcid"
        fcidump.from_scf(mf, str(path), tol=1e-14)
        e_fci = fci.FCI(mf).kernel()[0]
        energies[f"{d:.3f}"] = float(e_fci)
        print(f"{d:.3f}  E_RHF={mf.e_tot:.10f}  E_FCI={e_fci:.10f}")
    (outdir / "fci_energies.json").write_text(json.dumps(energies, indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/symvqe/data/h2")
