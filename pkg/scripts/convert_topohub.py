"""Regenerate the bundled SNDlib native topology files from the topohub wheel.

topohub ships SNDlib networks as node-link JSON with antiparallel link pairs
merged. janos-us and janos-us-ca are bidirectional in SNDlib (one link entry
per direction), so both directions are written back out for them.

    pip download topohub --no-deps -d /tmp/th
    python scripts/convert_topohub.py /tmp/th/topohub-*.whl src/vnfplace/data
"""

import json
import sys
import zipfile
from pathlib import Path

TOPOLOGIES = {
    "nobel-us": False,
    "janos-us": True,
    "janos-us-ca": True,
    "germany50": False,
    "ta2": False,
}
MODULE_CAPACITY = 2500.0


def convert(doc: dict, name: str, bidirectional: bool) -> str:
    names = {n["id"]: n["name"] for n in doc["nodes"]}
    out = [
        "?SNDlib native format; type: network; version: 1.0",
        f"# network {name}",
        "# converted from topohub node-link JSON",
        "",
        "# NODE SECTION",
        "#",
        "# <node_id> [(<longitude>, <latitude>)]",
        "",
        "NODES (",
    ]
    for n in doc["nodes"]:
        lon, lat = n["pos"]
        out.append(f"  {n['name']} ( {lon:.2f} {lat:.2f} )")
    out += [
        ")",
        "",
        "# LINK SECTION",
        "#",
        "# <link_id> ( <source> <target> ) <pre_installed_capacity> <pre_installed_capacity_cost> "
        "<routing_cost> <setup_cost> ( {<module_capacity> <module_cost>}* )",
        "",
        "LINKS (",
    ]
    for e in doc["edges"]:
        pairs = [(e["source"], e["target"])]
        if bidirectional:
            pairs.append((e["target"], e["source"]))
        for s, t in pairs:
            a, b = names[s], names[t]
            out.append(
                f"  {a}_{b} ( {a} {b} ) 0.00 0.00 0.00 0.00 ( {MODULE_CAPACITY:.2f} 1.00 )"
            )
    out += [")", ""]
    return "\n".join(out)


def main(wheel: str, dest: str) -> None:
    z = zipfile.ZipFile(wheel)
    for name, bidirectional in TOPOLOGIES.items():
        doc = json.loads(z.read(f"topohub/data/sndlib/{name}.json"))
        Path(dest, f"{name}.txt").write_text(convert(doc, name, bidirectional))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
