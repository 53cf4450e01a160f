"""Main motion along the four built-in c != 0 sections.

Prints each torus track and the jumps found by the continuity detector.
Run with ``python demos/section_jumps.py [samples]``.
"""
import sys

from precess.sweep import SECTIONS, emit_section, section_config, section_report


def main(samples=21):
    for name in SECTIONS:
        res = emit_section(section_config(name, samples=samples))
        print(f"section {name}")
        for tid, info in section_report(res).items():
            vals = [r["lambda"] for r in res.rows if r["torus_id"] == tid]
            arcs = ", ".join(f"{j:.3f}" for j in info["jumps"])
            state = "continuous" if info["continuous"] else f"jumps at arc {arcs}"
            print(f"  torus {tid}: {vals[0]:+.3f} -> {vals[-1]:+.3f}, {state}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 21)
