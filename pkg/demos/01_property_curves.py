"""Fluid and rock property curves.

Prints the Brooks-Corey relative permeabilities and the regularized
capillary pressure over the mobile saturation range, plus a few pinned
values that are handy sanity checks (both phases have relative
permeability 1/4 at S_w = 0.5, and p_c at full water saturation equals
the entry pressure).

Run:  python demos/01_property_curves.py
"""

import numpy as np

from stdd.physics import (BrooksCoreyModel, FluidModel, FluidRockModel,
                          property_curves)


def main():
    model = FluidRockModel(FluidModel(), BrooksCoreyModel())
    curves = property_curves(model)

    print("   S_w      k_rw      k_ro    p_c [psi]")
    for row in curves[::8]:
        print(f"{row[0]:6.3f}  {row[1]:8.5f}  {row[2]:8.5f}  {row[3]:9.4f}")

    relcap = model.relcap
    print()
    print(f"k_rw(0.5) = {relcap.krw(0.5)[0]}   (exactly 1/4)")
    print(f"k_ro(0.5) = {relcap.kro(0.5)[0]}   (exactly 1/4)")
    print(f"p_c(1.0)  = {relcap.pc(1.0)[0]} psi (entry pressure)")
    print(f"p_c cap near irreducible water: {relcap.pc_max:.4f} psi")

    # simple ASCII plot of the two relative permeability curves
    print()
    ncol = 61
    for krw, kro, sw in zip(curves[:, 1], curves[:, 2], curves[:, 0]):
        if round(sw * 100) % 4:
            continue
        line = [" "] * ncol
        line[int(krw * (ncol - 1))] = "w"
        line[int(kro * (ncol - 1))] = "o"
        print(f"{sw:5.2f} |" + "".join(line) + "|")


if __name__ == "__main__":
    main()
