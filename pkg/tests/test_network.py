import math
from pathlib import Path
from unittest import TestCase

import yaml

from cpds_dad.network import (
    EXAMPLE_CASE,
    Network,
    NetworkError,
    SwitchClass,
    adjacency,
    dump_network,
    feeders,
    grid_positions,
    load_network,
    parse_network,
    rcs_position,
    resolve_case,
    save_network,
    total_weighted_load,
    validate_case,
)

from . import inside_temp_dir


def example_data() -> dict:
    return yaml.safe_load(EXAMPLE_CASE)


def parse_data(data: dict) -> Network:
    return parse_network(yaml.safe_dump(data))


class TestParseNetwork(TestCase):
    def test_parse_network_reads_example_case(self):
        net = parse_network(EXAMPLE_CASE)
        self.assertEqual(net.name, "two-node")
        self.assertEqual([n.id for n in net.nodes], ["1", "2"])
        self.assertTrue(net.nodes[0].is_substation)
        self.assertAlmostEqual(net.nodes[1].p_load, 0.1)
        line = net.lines[0]
        self.assertEqual((line.from_node, line.to_node), ("1", "2"))
        self.assertIs(line.switch_class, SwitchClass.sectionalizing)
        self.assertEqual(line.rcs_id, "S1-2")
        self.assertTrue(line.base_closed)
        self.assertEqual(net.base_stations[0].position, (25.0, 50.0))

    def test_parse_network_fills_defaults(self):
        net = parse_network(EXAMPLE_CASE)
        self.assertEqual(net.base_mva, 10.0)
        self.assertEqual(net.nodes[1].weight, 1.0)
        self.assertEqual(net.defaults.k_max, 6)
        self.assertEqual(net.defaults.stage0, "network")
        self.assertEqual(net.defaults.capture_method, "poly")
        self.assertIsNone(net.lines[0].rcs_position)

    def test_parse_network_rejects_wrong_format_version(self):
        data = example_data()
        data["format_version"] = 2
        with self.assertRaisesRegex(NetworkError, "format_version"):
            parse_data(data)

    def test_parse_network_rejects_missing_section(self):
        data = example_data()
        del data["lines"]
        with self.assertRaisesRegex(NetworkError, "parse error"):
            parse_data(data)

    def test_parse_network_rejects_bad_yaml(self):
        with self.assertRaisesRegex(NetworkError, "parse error"):
            parse_network("nodes: [")

    def test_parse_network_rejects_non_mapping(self):
        with self.assertRaisesRegex(NetworkError, "mapping"):
            parse_network("- 1\n- 2\n")


class TestValidateNetwork(TestCase):
    def assertInvalid(self, data: dict, pattern: str):  # noqa: N802
        with self.assertRaisesRegex(NetworkError, pattern):
            parse_data(data)

    def test_duplicate_node_ids_are_rejected(self):
        data = example_data()
        data["nodes"].append(dict(data["nodes"][1]))
        self.assertInvalid(data, r"node '2': duplicate id")

    def test_unknown_line_endpoint_is_rejected(self):
        data = example_data()
        data["lines"][0]["to"] = "9"
        self.assertInvalid(data, r"line 'L1-2': unknown node '9'")

    def test_closed_tie_line_is_rejected(self):
        data = example_data()
        data["lines"][0]["class"] = "tie"
        self.assertInvalid(data, r"line 'L1-2': tie line cannot be closed")

    def test_isolated_node_is_rejected(self):
        data = example_data()
        data["nodes"].append({"id": "3", "x": 0, "y": 0})
        self.assertInvalid(data, r"node '3': isolated node")

    def test_cycle_in_base_topology_is_rejected(self):
        data = example_data()
        data["nodes"].append({"id": "3", "x": 0, "y": 0})
        for k, (a, b) in enumerate([("2", "3"), ("3", "1")]):
            data["lines"].append(
                {
                    "id": f"X{k}",
                    "from": a,
                    "to": b,
                    "length": 1,
                    "r": 0.01,
                    "x": 0.01,
                    "s_max": 1,
                    "closed": True,
                }
            )
        self.assertInvalid(data, "closed lines contain a cycle")

    def test_tree_without_substation_is_rejected(self):
        data = example_data()
        data["nodes"][0]["substation"] = False
        data["nodes"][0]["pg_max"] = 0
        data["nodes"][0]["qg_max"] = 0
        self.assertInvalid(data, r"has 0 substations")

    def test_parallel_lines_are_rejected(self):
        data = example_data()
        data["lines"].append(
            dict(data["lines"][0], id="L2-1", rcs="S2-1", **{"from": "2", "to": "1"})
        )
        data["lines"][-1]["class"] = "tie"
        data["lines"][-1]["closed"] = False
        self.assertInvalid(data, r"line 'L2-1': parallel to line 'L1-2'")

    def test_generation_on_load_node_is_rejected(self):
        data = example_data()
        data["nodes"][1]["pg_max"] = 0.5
        self.assertInvalid(data, r"node '2': generation limits must be zero")

    def test_inspection_intensities_must_be_ordered(self):
        data = example_data()
        data["inspection"] = {"zeta_a": 5, "zeta_b": 1, "p_defend": 0.9}
        self.assertInvalid(data, r"zeta_b > zeta_a")

    def test_unknown_stage0_mode_is_rejected(self):
        data = example_data()
        data["restoration"] = {"stage0": "everything"}
        self.assertInvalid(data, "stage0")

    def test_validation_reports_every_problem(self):
        data = example_data()
        data["lines"][0]["length"] = 0
        data["base_stations"][0]["sigma"] = 0
        with self.assertRaises(NetworkError) as ctx:
            parse_data(data)
        msg = str(ctx.exception)
        self.assertIn("line 'L1-2': length must be positive", msg)
        self.assertIn("base station 'BS1': sigma must be positive", msg)


class TestShippedCases(TestCase):
    def test_toy_case_has_documented_shape(self):
        net = load_network("toy6")
        self.assertEqual(len(net.nodes), 6)
        self.assertEqual(sum(not ln.is_tie for ln in net.lines), 5)
        self.assertEqual(sum(ln.is_tie for ln in net.lines), 2)
        self.assertEqual([n.id for n in net.nodes if n.is_substation], ["1"])
        self.assertEqual([n.id for n in net.nodes if n.is_dg], ["4"])
        self.assertEqual(len(net.base_stations), 2)
        self.assertEqual(len(grid_positions(net)), 4)

    def test_ieee33_case_has_published_shape(self):
        net = load_network("ieee33")
        self.assertEqual(len(net.nodes), 33)
        self.assertEqual(len(net.lines), 37)
        self.assertEqual(
            sorted(ln.id for ln in net.lines if ln.is_tie),
            sorted(["L8-21", "L9-15", "L12-22", "L18-33", "L25-29"]),
        )
        self.assertEqual(
            sorted(int(n.id) for n in net.nodes if n.is_dg), [6, 18, 21, 24, 33]
        )
        self.assertEqual(len(net.base_stations), 7)
        self.assertAlmostEqual(sum(n.p_load for n in net.nodes), 3.715, places=9)
        self.assertAlmostEqual(sum(n.q_load for n in net.nodes), 2.3, places=9)
        self.assertAlmostEqual(total_weighted_load(net), 3.715, places=9)

    def test_ieee33_impedances_are_per_unit(self):
        net = load_network("ieee33")
        line = net.line_by_id["L1-2"]
        self.assertAlmostEqual(line.r, 0.0922 / 16.0276, places=6)
        self.assertAlmostEqual(line.x, 0.0470 / 16.0276, places=6)

    def test_resolve_case_prefers_existing_files(self):
        with inside_temp_dir():
            Path("toy6").write_text(EXAMPLE_CASE)
            self.assertEqual(resolve_case("toy6"), Path("toy6"))
            self.assertEqual(load_network("toy6").name, "two-node")

    def test_resolve_case_passes_unknown_names_through(self):
        self.assertEqual(resolve_case("nowhere.yaml"), Path("nowhere.yaml"))

    def test_load_network_raises_os_error_for_missing_file(self):
        with self.assertRaises(OSError):
            load_network("does/not/exist.yaml")


class TestSerialization(TestCase):
    def test_save_network_round_trips(self):
        for case in ("toy6", "ieee33"):
            with self.subTest(case=case), inside_temp_dir():
                net = load_network(case)
                path = save_network(net, "copy.yaml")
                self.assertEqual(load_network(path), net)

    def test_dump_network_keeps_overrides(self):
        data = example_data()
        data["lines"][0]["rcs_x"] = 5
        data["lines"][0]["rcs_y"] = 7
        data["poly"] = {"zeta": 1e-3}
        net = parse_data(data)
        again = parse_network(dump_network(net))
        self.assertEqual(again.lines[0].rcs_position, (5.0, 7.0))
        self.assertEqual(again.defaults.poly, {"zeta": 1e-3})

    def test_validate_case_lists_messages(self):
        with inside_temp_dir():
            data = example_data()
            data["lines"][0]["s_max"] = -1
            Path("bad.yaml").write_text(yaml.safe_dump(data))
            Path("good.yaml").write_text(EXAMPLE_CASE)
            self.assertEqual(validate_case("good.yaml"), [])
            messages = validate_case("bad.yaml")
            self.assertIn("line 'L1-2': s_max must be positive", messages)


class TestQueries(TestCase):
    def setUp(self):
        self.net = load_network("toy6")

    def test_grid_positions_are_row_major(self):
        self.assertEqual(
            grid_positions(self.net),
            [(0.0, 0.0), (1000.0, 0.0), (0.0, 1000.0), (1000.0, 1000.0)],
        )

    def test_grid_positions_follow_grid_step(self):
        net = self.net.with_grid_step(500.0)
        positions = grid_positions(net)
        self.assertEqual(len(positions), 9)
        self.assertEqual(positions[1], (500.0, 0.0))

    def test_grid_positions_rejects_degenerate_region(self):
        data = example_data()
        data["region"]["x_max"] = 0
        net = parse_data(data)
        with self.assertRaisesRegex(NetworkError, "degenerate region"):
            grid_positions(net)

    def test_rcs_position_defaults_to_midpoint(self):
        line = self.net.line_by_id["L1-2"]
        self.assertEqual(rcs_position(self.net, line), (250.0, 100.0))

    def test_adjacency_lists_both_directions(self):
        adj = adjacency(self.net)
        self.assertEqual(
            sorted(other for _, other in adj["2"]), ["1", "3", "5"]
        )
        self.assertEqual(sum(len(v) for v in adj.values()), 2 * len(self.net.lines))

    def test_feeders_map_every_node_to_the_substation(self):
        self.assertEqual(set(feeders(self.net).values()), {"1"})

    def test_total_weighted_load_counts_weights(self):
        # Node 3 has weight 2.
        self.assertTrue(math.isclose(total_weighted_load(self.net), 0.70))
