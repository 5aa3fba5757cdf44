"""Regenerate the bundled scenario catalog (src/earthbt/data/catalog/*.json).

Scenarios 1-10 carry the instruction texts of the published benchmark table;
11-30 are authored here to fill the 15 single / 15 coordinated split.
"""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "earthbt" / "data" / "catalog"

PLACES = {
    "excavator_station": {"x": 0, "y": 0, "slots": 1, "near": ["mound", "loading_site", "temporary_site"]},
    "mound": {"x": -6, "y": 0, "slots": 1, "soil": 20},
    "loading_site": {"x": 6, "y": 0, "slots": 1},
    "temporary_site": {"x": 0, "y": -6, "slots": 1},
    "dumping_site": {"x": 40, "y": 0, "slots": 1},
    "truck_park": {"x": 20, "y": -16, "slots": 1},
    "truck_park_1": {"x": 16, "y": -16, "slots": 1},
    "truck_park_2": {"x": 26, "y": -16, "slots": 1},
    "excavation_point_b": {"x": 0, "y": 30, "slots": 1, "near": ["mound_b", "temporary_site_b"]},
    "mound_b": {"x": -6, "y": 30, "slots": 1, "soil": 10},
    "temporary_site_b": {"x": 0, "y": 24, "slots": 1},
}

E = {"id": "excavator", "kind": "Excavator", "place": "excavator_station", "pose": "work"}
T = {"id": "dump_truck", "kind": "DumpTruck", "place": "truck_park"}
T1 = {"id": "dump_truck_1", "kind": "DumpTruck", "place": "truck_park_1"}
T2 = {"id": "dump_truck_2", "kind": "DumpTruck", "place": "truck_park_2"}


def loaded(truck):
    return dict(truck, bed_load=1)


def soil(place, units):
    return {"type": "soil_at", "place": place, "units": units}


def bed(machine, units=0):
    return {"type": "bed_load", "machine": machine, "units": units}


def at(machine, place):
    return {"type": "machine_at", "machine": machine, "place": place}


def done(machine, label, count):
    return {"type": "completed", "machine": machine, "label": label, "count": count}


def pose(machine, name="initial"):
    return {"type": "pose", "machine": machine, "pose": name}


def excavate(count=1, source="mound", target="temporary_site"):
    return {"op": "excavate", "excavator": "excavator", "source": source, "target": target, "count": count}


def haul(trucks, loads=1, **extra):
    return dict({"op": "haul", "excavator": "excavator", "trucks": trucks, "source": "mound",
                 "loads_per_trip": loads, "dump_place": "dumping_site"}, **extra)


def delivered(units, trucks):
    return [soil("dumping_site", units), soil("mound", 20 - units)] + [bed(t) for t in trucks]


SCENARIOS = [
    # published scenario table, single
    (1, "published", "Excavate once and load the soil at the temporary site.", [E],
     [excavate()], [soil("temporary_site", 1), soil("mound", 19)]),
    (2, "published", "Perform three excavation actions with the excavator.", [E],
     [excavate(3)], [done("excavator", "release", 3)]),
    (3, "published", "Excavate once and return to the initial pose; afterward, move to another excavation "
                 "point and repeat the same sequence once.", [E],
     [excavate(), {"op": "reset", "machine": "excavator"},
      {"op": "move", "machine": "excavator", "place": "excavation_point_b"},
      excavate(source="mound_b", target="temporary_site_b"), {"op": "reset", "machine": "excavator"}],
     [done("excavator", "release", 2), soil("temporary_site", 1), soil("temporary_site_b", 1),
      at("excavator", "excavation_point_b"), pose("excavator")]),
    (4, "published", "The dump truck dumps the soil at its current location.", [loaded(T)],
     [{"op": "dump", "machine": "dump_truck"}], [soil("truck_park", 1), bed("dump_truck")]),
    (5, "published", "The dump truck dumps the soil at the dumping site, then moves to the loading point.",
     [loaded(T)],
     [{"op": "move", "machine": "dump_truck", "place": "dumping_site"}, {"op": "dump", "machine": "dump_truck"},
      {"op": "move", "machine": "dump_truck", "place": "loading_site"}],
     [soil("dumping_site", 1), bed("dump_truck"), at("dump_truck", "loading_site")]),
    # published scenario table, coordinated
    (6, "published", "Excavate the soil once and transport it to the dumping site using a dump truck.", [E, T],
     [haul(["dump_truck"])], delivered(1, ["dump_truck"])),
    (7, "published", "Load soil onto the dump truck, level the soil on its bed, and then move it to the "
                 "dumping site to unload.", [E, T],
     [haul(["dump_truck"], level=True)],
     delivered(1, ["dump_truck"]) + [done("excavator", "level_pass:dump_truck", 1)]),
    (8, "published", "Repeat the excavation and dumping sequence twice using the same excavator–dump "
                 "truck pair.", [E, T],
     [haul(["dump_truck"] * 2)], delivered(2, ["dump_truck"])),
    (9, "published", "Load soil onto each of the two dump trucks once and transport it.", [E, T1, T2],
     [haul(["dump_truck_1", "dump_truck_2"])], delivered(2, ["dump_truck_1", "dump_truck_2"])),
    (10, "published", "Use two dump trucks to excavate and transport soil a total of four times. Load soil "
                  "onto each dump truck twice per trip.", [E, T1, T2],
     [haul(["dump_truck_1", "dump_truck_2"] * 2, loads=2)],
     delivered(8, ["dump_truck_1", "dump_truck_2"])),
    # derived, single
    (11, "derived", "Gather the soil around the mound with the excavator.", [E],
     [{"op": "gather", "machine": "excavator", "place": "mound"}], [done("excavator", "gather_pull", 1)]),
    (12, "derived", "Level the ground at the temporary site.", [E],
     [{"op": "level", "machine": "excavator", "place": "temporary_site"}],
     [done("excavator", "level_pass:temporary_site", 1)]),
    (13, "derived", "Move the excavator to excavation point B.", [E],
     [{"op": "move", "machine": "excavator", "place": "excavation_point_b"}],
     [at("excavator", "excavation_point_b")]),
    (14, "derived", "Return the excavator to its initial pose.", [E],
     [{"op": "reset", "machine": "excavator"}], [pose("excavator")]),
    (15, "derived", "Excavate twice onto the temporary site, then return to the initial pose.", [E],
     [excavate(2), {"op": "reset", "machine": "excavator"}],
     [soil("temporary_site", 2), pose("excavator")]),
    (16, "derived", "Drive the dump truck to the loading site.", [T],
     [{"op": "move", "machine": "dump_truck", "place": "loading_site"}], [at("dump_truck", "loading_site")]),
    (17, "derived", "Drive the loaded dump truck to the dumping site and unload it there.", [loaded(T)],
     [{"op": "move", "machine": "dump_truck", "place": "dumping_site"}, {"op": "dump", "machine": "dump_truck"}],
     [soil("dumping_site", 1), bed("dump_truck")]),
    (18, "derived", "Gather the soil at the mound, then excavate once onto the temporary site.", [E],
     [{"op": "gather", "machine": "excavator", "place": "mound"}, excavate()],
     [done("excavator", "gather_pull", 1), soil("temporary_site", 1)]),
    (19, "derived", "Excavate once onto the temporary site, level it, and return to the initial pose.", [E],
     [excavate(), {"op": "level", "machine": "excavator", "place": "temporary_site"},
      {"op": "reset", "machine": "excavator"}],
     [soil("temporary_site", 1), done("excavator", "level_pass:temporary_site", 1), pose("excavator")]),
    (20, "derived", "Move the excavator to excavation point B and excavate twice there.", [E],
     [{"op": "move", "machine": "excavator", "place": "excavation_point_b"},
      excavate(2, source="mound_b", target="temporary_site_b")],
     [soil("temporary_site_b", 2), soil("mound_b", 8)]),
    # derived, coordinated
    (21, "derived", "Load the soil onto a dump truck.", [E, T],
     [haul(["dump_truck"], deliver=False)], [bed("dump_truck", 1), at("dump_truck", "loading_site")]),
    (22, "derived", "Load the dump truck twice and transport the soil to the dumping site.", [E, T],
     [haul(["dump_truck"], loads=2)], delivered(2, ["dump_truck"])),
    (23, "derived", "Haul soil to the dumping site in three trips with one dump truck.", [E, T],
     [haul(["dump_truck"] * 3)], delivered(3, ["dump_truck"])),
    (24, "derived", "Alternate two dump trucks for four trips of one bucket each.", [E, T1, T2],
     [haul(["dump_truck_1", "dump_truck_2"] * 2)], delivered(4, ["dump_truck_1", "dump_truck_2"])),
    (25, "derived", "Transport one load to the dumping site, then bring the dump truck back to the "
                    "loading site.", [E, T],
     [haul(["dump_truck"], **{"return": "loading_site"})],
     delivered(1, ["dump_truck"]) + [at("dump_truck", "loading_site")]),
    (26, "derived", "Load each of two dump trucks twice and transport both loads.", [E, T1, T2],
     [haul(["dump_truck_1", "dump_truck_2"], loads=2)], delivered(4, ["dump_truck_1", "dump_truck_2"])),
    (27, "derived", "Gather the soil at the mound first, then load a dump truck once and transport it.",
     [E, T],
     [{"op": "gather", "machine": "excavator", "place": "mound"}, haul(["dump_truck"])],
     delivered(1, ["dump_truck"]) + [done("excavator", "gather_pull", 1)]),
    (28, "derived", "Use two dump trucks for three trips in total, starting and ending with the first "
                    "truck.", [E, T1, T2],
     [haul(["dump_truck_1", "dump_truck_2", "dump_truck_1"])],
     delivered(3, ["dump_truck_1", "dump_truck_2"])),
    (29, "derived", "Transport one load to the dumping site and park the dump truck afterwards.", [E, T],
     [haul(["dump_truck"], **{"return": "park"})],
     delivered(1, ["dump_truck"]) + [at("dump_truck", "truck_park")]),
    (30, "derived", "Haul two loads with one dump truck, leveling the soil on the bed before each "
                    "departure.", [E, T],
     [haul(["dump_truck"] * 2, level=True)],
     delivered(2, ["dump_truck"]) + [done("excavator", "level_pass:dump_truck", 2)]),
]


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for old in OUT.glob("*.json"):
        old.unlink()
    for sid, provenance, text, machines, task, goal in SCENARIOS:
        kinds = [m["kind"] for m in machines]
        doc = {
            "provenance": provenance,
            "id": sid,
            "instruction": text,
            "category": "Coordinated" if len(machines) > 1 else "Single",
            "excavators": kinds.count("Excavator"),
            "dump_trucks": kinds.count("DumpTruck"),
            "site": {"loading_place": "loading_site", "travel_speed": 2.0, "places": PLACES},
            "machines": [dict({"pose": "initial", "bed_load": 0}, **m) for m in machines],
            "task": task,
            "goal": goal,
        }
        (OUT / f"scenario_{sid:02d}.json").write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
