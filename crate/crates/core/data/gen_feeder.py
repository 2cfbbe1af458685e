"""Regenerates feeder_default.txt. Run from this directory."""

import random

OHM_PER_KM = (0.2, 0.4)
SUB_Z = (0.01, 0.06)          # substation transformer, pu on 2.5 MVA
SVC_Z = (0.02, 0.05)          # service transformers, pu on 250 kVA
SEG_Z = (0.02, 0.01)          # secondary drop per home, ohm
DROP_Z = (0.002, 0.001)       # home junction to meter, ohm
HOMES = 16
CHARGER = ("N10", 5)

rng = random.Random(7)
rows = []


def row(node, parent, v, r, x, ratio, kind, hood="-", home="-"):
    rows.append(f"{node:<10} {parent:<10} {v:>8g} {r:>10.6f} {x:>10.6f} {ratio!r:>18}  {kind:<9} {hood:<4} {home}")


row("SUB", "-", 230000, 0, 0, 1, "slack")
zb = 4800**2 / 2.5e6
row("P01", "SUB", 4800, SUB_Z[0] * zb, SUB_Z[1] * zb, 230000 / 4800, "primary")


def line(name, parent):
    km = round(rng.uniform(0.25, 0.6), 2)
    row(name, parent, 4800, OHM_PER_KM[0] * km, OHM_PER_KM[1] * km, 1, "primary")


trunk = [f"P{k:02d}" for k in range(1, 14)]
for a, b in zip(trunk, trunk[1:]):
    line(b, a)
laterals = {"P04": ("A", 6), "P07": ("B", 8), "P10": ("C", 10)}
for root, (tag, n) in laterals.items():
    prev = root
    for k in range(1, n + 1):
        name = f"L{tag}{k:02d}"
        line(name, prev)
        prev = name

hoods = ["P05", "P09", "P13", "LA03", "LA06", "LB04", "LB08", "LC03", "LC07", "LC10"]
zb_lv = 240**2 / 250e3
for i, bus in enumerate(hoods, start=1):
    hood = f"N{i:02d}"
    svc = f"{hood}S"
    row(svc, bus, 240, SVC_Z[0] * zb_lv, SVC_Z[1] * zb_lv, 4800 / 240, "service", hood)
    prev = svc
    for h in range(1, HOMES + 1):
        j = f"{hood}H{h:02d}"
        row(j, prev, 240, SEG_Z[0], SEG_Z[1], 1, "secondary", hood, h)
        row(f"{j}h", j, 240, DROP_Z[0], DROP_Z[1], 1, "house", hood, h)
        ev = "charger" if (hood, h) == CHARGER else "ev"
        row(f"{j}e", j, 240, DROP_Z[0], DROP_Z[1], 1, ev, hood, h)
        prev = j

with open("feeder_default.txt", "w") as f:
    f.write("# Default 37-bus primary, 10 neighborhoods x 16 homes, 2 end-nodes per home.\n")
    f.write("# Impedances in ohm referred to the node's own voltage level.\n")
    f.write("# ratio = parent-side / node-side rated voltage of the branch feeding the node.\n")
    f.write("s_base_va 1000000\n")
    f.write("# node     parent      v_nom_V      r_ohm      x_ohm              ratio  kind      hood home\n")
    f.write("\n".join(rows) + "\n")
