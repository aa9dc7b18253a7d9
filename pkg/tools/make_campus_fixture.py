"""Regenerate fixtures/campus/ from the campus world generator.

Three adjacent venues, doors shared pairwise, plus the scenario file that
produced them. The fixture is committed; rerun this only to rebuild it
after a deliberate generator change, and review the diff.
"""

from pathlib import Path

from flamekit.sim import make_campus_world

SEED = 9
OUT = Path(__file__).resolve().parent.parent / "fixtures" / "campus"


def main() -> None:
    world = make_campus_world(seed=SEED, n_maps=3, steps=240, dwell_s=60.0)
    maps_dir = OUT / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    for sm in world.maps:
        (maps_dir / f"{sm.map_id}.json").write_text(sm.map_file.to_json())
    (OUT / "scenario.json").write_text(world.to_json())
    print(f"wrote {len(world.maps)} maps + scenario.json to {OUT}")


if __name__ == "__main__":
    main()
