"""World model, cue synthesis, and the two simulation entry points."""

import dataclasses
import json
import math

import numpy as np
import pytest

from flamekit import sim
from flamekit.geodomains import CoarseLocation, query_set
from flamekit.mapserver import localize
from flamekit.posemath import Pose
from flamekit.sim import (
    HarnessError,
    MetricsReport,
    SimMap,
    WorldSpec,
    make_campus_world,
    replay_discovery,
    report,
    run,
    synthesize_cues,
    world_hash,
    world_to_latlng,
)


def small_world(**kw):
    kw.setdefault("seed", 5)
    kw.setdefault("n_maps", 2)
    kw.setdefault("steps", 120)
    kw.setdefault("dwell_s", 30.0)
    return make_campus_world(**kw)


class TestWorldSpec:
    def test_json_roundtrip_is_byte_stable(self):
        world = small_world()
        text = world.to_json()
        again = WorldSpec.from_json(text)
        assert again.to_json() == text
        assert world_hash(again) == world_hash(world)

    def test_rejects_bad_json(self):
        with pytest.raises(HarnessError, match="not valid JSON"):
            WorldSpec.from_json("{nope")

    def test_schema_violations_are_reported_with_paths(self):
        doc = json.loads(small_world().to_json())
        doc["nameservers"] = 3
        with pytest.raises(HarnessError, match="schema violation"):
            WorldSpec.from_json(json.dumps(doc))
        doc = json.loads(small_world().to_json())
        del doc["origin"]
        with pytest.raises(HarnessError, match="origin"):
            WorldSpec.from_json(json.dumps(doc))

    def test_duplicate_map_id_rejected(self):
        world = small_world()
        with pytest.raises(HarnessError, match="duplicate map id"):
            dataclasses.replace(world, maps=(world.maps[0], world.maps[0]))

    def test_timestamps_must_increase(self):
        world = small_world()
        t0, p0 = world.trajectory[0]
        with pytest.raises(HarnessError, match="strictly increase"):
            dataclasses.replace(world, trajectory=((t0, p0), (t0, p0)))

    def test_map_needs_region(self):
        world = small_world()
        bare = dataclasses.replace(
            world.maps[0],
            map_file=dataclasses.replace(world.maps[0].map_file, region=None))
        with pytest.raises(HarnessError, match="no region"):
            dataclasses.replace(world, maps=(bare,) + world.maps[1:])

    def test_world_frame_anchored_at_origin(self):
        origin = (40.4433, -79.9436)
        ll = world_to_latlng(origin, 0.0, 0.0)
        assert (ll.lat, ll.lng) == origin
        north = world_to_latlng(origin, 0.0, 100.0)
        assert north.lat > origin[0] and abs(north.lng - origin[1]) < 1e-12


class TestCampusWorld:
    def test_default_shape(self):
        world = make_campus_world(seed=11)
        assert [m.map_id for m in world.maps] == ["m0", "m1", "m2", "m3"]
        assert len(world.trajectory) == 500
        for m in world.maps:
            assert len(m.map_file.landmarks) == 20
            assert m.map_file.region is not None

    def test_door_waypoints_agree_across_maps(self):
        # the stitch precondition: both maps place a shared door at the
        # same world point, each expressed in its own frame
        world = make_campus_world(seed=11)
        for k in range(len(world.maps) - 1):
            a, b = world.maps[k], world.maps[k + 1]
            for side in ("n", "s"):
                name = f"door-{k}{k + 1}{side}"
                wa = a.pose.transform_point(
                    np.asarray(a.map_file.waypoint(name).position))
                wb = b.pose.transform_point(
                    np.asarray(b.map_file.waypoint(name).position))
                assert np.allclose(wa, wb, atol=1e-9)

    def test_walk_speed_bounded(self):
        world = small_world()
        for (ta, pa), (tb, pb) in zip(world.trajectory, world.trajectory[1:]):
            d = float(np.linalg.norm(pb.t - pa.t))
            assert d <= 1.2 * (tb - ta) + 1e-9

    def test_trace_is_mostly_dwell(self):
        world = make_campus_world(seed=11)
        moved = sum(
            1 for (_, pa), (_, pb) in zip(world.trajectory,
                                          world.trajectory[1:])
            if float(np.linalg.norm(pb.t - pa.t)) > 0)
        assert moved / len(world.trajectory) < 0.3


class TestCueSynthesis:
    def test_device_at_landmark_sees_it_at_origin(self):
        world = small_world()
        sm = world.maps[0]
        lid, pos = sm.map_file.landmarks[0]
        world_pos = sm.pose.transform_point(np.asarray(pos))
        traj = ((0.0, Pose(t=world_pos)), (1.0, Pose(t=world_pos)))
        here = dataclasses.replace(world, trajectory=traj)
        cues = synthesize_cues(here, 0.0, sm.map_id)
        got = dict(cues.observations)
        assert np.linalg.norm(np.asarray(got[lid])) < 1e-9

    def test_far_away_sees_nothing(self):
        world = small_world()
        far = Pose(t=(0.0, 500.0, 0.0))
        traj = ((0.0, far), (1.0, far))
        away = dataclasses.replace(world, trajectory=traj)
        for m in away.maps:
            assert synthesize_cues(away, 0.0, m.map_id).observations == ()

    def test_noiseless_cues_recover_ground_truth_pose(self):
        # oracle: pure pose algebra on the ground truth, no server involved
        world = small_world()
        for t, device in world.trajectory[:40]:
            for sm in world.maps:
                cues = synthesize_cues(world, t, sm.map_id)
                if len(cues.observations) < 3:
                    continue
                result = localize(cues, sm.map_file)
                if not result.ok:
                    continue
                want = sm.pose.inverse().compose(device)
                assert result.pose.almost_equal(want, tol_m=1e-6,
                                                tol_deg=1e-4)

    def test_noise_applied_only_with_rng(self):
        world = dataclasses.replace(small_world(), obs_noise_m=0.01)
        clean = synthesize_cues(world, 0.0, "m0")
        noisy = synthesize_cues(world, 0.0, "m0",
                                rng=np.random.default_rng(1))
        assert clean.observations != noisy.observations
        for (_, a), (_, b) in zip(clean.observations, noisy.observations):
            assert np.linalg.norm(np.asarray(a) - np.asarray(b)) < 0.1

    def test_unknown_map_rejected(self):
        with pytest.raises(HarnessError, match="unknown map"):
            synthesize_cues(small_world(), 0.0, "nope")

    def test_time_must_be_on_trajectory(self):
        with pytest.raises(HarnessError, match="no trajectory sample"):
            synthesize_cues(small_world(), 0.123, "m0")


class TestFixModel:
    def test_fix_repeats_until_movement_or_age(self):
        world = small_world()
        fixes = sim._FixModel(world, np.random.default_rng(0))
        here = Pose(t=(0.0, 0.0, 0.0))
        first, _ = fixes.sample(0.0, here)
        again, _ = fixes.sample(2.0, here)
        assert again is first
        # 5 m movement forces a refresh
        moved, _ = fixes.sample(4.0, Pose(t=(world.fix_refresh_m, 0.0, 0.0)))
        assert moved is not first
        # age alone forces one too
        aged, _ = fixes.sample(4.0 + world.fix_refresh_s,
                               Pose(t=(world.fix_refresh_m, 0.0, 0.0)))
        assert aged is not moved

    def test_radius_drawn_from_indoor_band_inside_a_venue(self):
        world = small_world()
        fixes = sim._FixModel(world, np.random.default_rng(0))
        for k in range(50):
            fix, indoor = fixes.sample(
                float(k) * world.fix_refresh_s, Pose(t=(0.0, 0.0, 0.0)))
            assert indoor
            lo, hi = world.indoor_r95_m
            assert lo <= fix.error_radius_m <= hi


class TestReplayDiscovery:
    def test_replay_statistics(self):
        world = small_world()
        metrics = replay_discovery(world)
        agg = metrics.aggregates()
        assert agg["first_step_fully_uncached"]
        assert all(s.ok for s in metrics.steps)
        assert all(s.query_total >= s.query_uncached for s in metrics.steps)
        ratios = [s.hit_ratio for s in metrics.steps if s.hit_ratio is not None]
        assert all(0.0 <= r <= 1.0 for r in ratios)

    def test_per_step_totals_conserve_query_set_size(self):
        # replaying the fix sequence independently gives the exact
        # per-step query-set sizes the resolver must account for
        world = small_world(steps=40)
        metrics = replay_discovery(world)
        fixes = sim._FixModel(world, np.random.default_rng(world.rng_seed))
        for step, (t, pose) in zip(metrics.steps, world.trajectory):
            fix, _ = fixes.sample(t, pose)
            assert step.query_total == len(query_set(fix))

    def test_deterministic_given_seed(self):
        a = replay_discovery(small_world())
        b = replay_discovery(small_world())
        assert a.to_json() == b.to_json()

    def test_delegated_zones_still_resolve(self):
        world = small_world(nameservers=2)
        metrics = replay_discovery(world)
        assert all(s.ok for s in metrics.steps)
        # referral hops re-issue names at the child, breaking the 1-NS
        # conservation equality upward
        fixes = sim._FixModel(world, np.random.default_rng(world.rng_seed))
        t0, pose0 = world.trajectory[0]
        fix, _ = fixes.sample(t0, pose0)
        assert metrics.steps[0].query_total > len(query_set(fix))


class TestClientRun:
    def test_four_map_selection(self):
        world = make_campus_world(seed=11, steps=260, dwell_s=40.0)
        metrics = run(world)
        agg = metrics.aggregates()
        assert agg["selection_accuracy"] >= 0.9
        assert agg["boundary_lags"], "trace never crossed a boundary"
        assert agg["max_boundary_lag"] <= 3
        assert metrics.steps[0].rediscovered

    def test_single_map_never_rediscovers_after_first_fix(self):
        world = small_world(n_maps=1, steps=60)
        metrics = run(world)
        assert sum(1 for s in metrics.steps if s.rediscovered) == 1
        assert all(s.active_map == "m0" for s in metrics.steps)

    def test_deterministic_given_seed(self):
        a = run(small_world(steps=60))
        b = run(small_world(steps=60))
        assert a.to_json() == b.to_json()

    def test_event_log_records_step_budget(self, tmp_path):
        log_path = tmp_path / "events.jsonl"
        world = small_world(steps=8)
        with log_path.open("w") as fp:
            run(world, event_log=fp)
        lines = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert len(lines) == 8
        assert all(line["elapsed_ms"] >= 0 for line in lines)
        assert lines[0]["rediscovered"]

    def test_startup_failure_becomes_harness_error(self, monkeypatch):
        def explode(endpoint, map_file):
            raise OSError("address in use")
        monkeypatch.setattr(sim, "serve_map", explode)
        with pytest.raises(HarnessError, match="startup failed"):
            run(small_world(steps=8))

    def test_vio_drift_forces_rediscovery(self):
        still = run(small_world(steps=80))
        drifty = run(small_world(steps=80, vio_drift_per_m=0.2))
        n_still = sum(1 for s in still.steps if s.rediscovered)
        n_drift = sum(1 for s in drifty.steps if s.rediscovered)
        assert n_drift > n_still


class TestGroundTruthBest:
    def test_best_map_is_argmax_visible_landmarks(self):
        world = make_campus_world(seed=11)
        # center of m1: m1 wins outright
        assert world.best_map_at(40.0, 0.0) == "m1"
        # far outside every venue: nobody
        assert world.best_map_at(0.0, 400.0) is None

    def test_tie_prefers_lexically_first(self):
        world = small_world()
        m0 = world.maps[0]
        twin = dataclasses.replace(
            m0, map_file=dataclasses.replace(
                m0.map_file, map_id="zz",
                landmarks=tuple(
                    (lid.replace("m0", "zz"), pos)
                    for lid, pos in m0.map_file.landmarks)))
        tied = dataclasses.replace(world, maps=(m0, twin))
        assert tied.best_map_at(0.0, 0.0) == "m0"


class TestReport:
    def test_files_written_and_manifest_lists_them(self, tmp_path):
        metrics = replay_discovery(small_world(steps=30))
        written = report(metrics, tmp_path)
        names = {p.name for p in written}
        assert {"metrics.json", "summary.json", "steps.csv",
                "fig_geodomains_per_step.csv", "fig_hit_ratio_hist.csv",
                "fig_selection_timeline.csv", "manifest.json"} <= names
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == metrics.seed
        assert manifest["world_hash"] == metrics.world_hash
        assert set(manifest["files"]) == names - {"manifest.json"}

    def test_csv_row_counts(self, tmp_path):
        metrics = replay_discovery(small_world(steps=30))
        report(metrics, tmp_path)
        rows = (tmp_path / "steps.csv").read_text().splitlines()
        assert len(rows) == 31
        hist = (tmp_path / "fig_hit_ratio_hist.csv").read_text().splitlines()
        counted = sum(int(r.rsplit(",", 1)[1]) for r in hist[1:])
        assert counted == sum(
            1 for s in metrics.steps[sim.WARMUP_STEPS:]
            if s.hit_ratio is not None)

    def test_json_only(self, tmp_path):
        metrics = replay_discovery(small_world(steps=30))
        written = report(metrics, tmp_path, formats=("json",))
        assert all(p.suffix == ".json" for p in written)

    def test_summary_matches_aggregates(self, tmp_path):
        metrics = replay_discovery(small_world(steps=30))
        report(metrics, tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary == json.loads(
            json.dumps(metrics.aggregates(), sort_keys=True))


class TestMetricsJson:
    def test_report_roundtrips_and_sorts(self):
        metrics = replay_discovery(small_world(steps=30))
        doc = json.loads(metrics.to_json())
        assert doc["v"] == 1
        assert doc["mode"] == "discovery"
        assert len(doc["steps"]) == 30
        assert metrics.to_json() == json.dumps(
            doc, indent=2, sort_keys=True) + "\n"
