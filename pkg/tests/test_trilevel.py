from unittest import TestCase, mock, skipUnless

from cpds_dad._utils import ScenarioCapError
from cpds_dad.attack import AttackPlan, Budgets, DefensePlan, InspectionParams
from cpds_dad.milp import Model, SolverOptions, solve
from cpds_dad.network import load_network
from cpds_dad.scenarios import ScenarioEngine, TargetKind, TruncationPolicy
from cpds_dad.trilevel import (
    block_for_attack,
    build_master,
    exhaustive_defense,
    linearize_product,
    solve_ccg,
    solve_master,
    solve_subproblem,
)

from . import SLOW_REASON, SLOW_TESTS

OPTS = SolverOptions(backend="highs")
PARAMS = InspectionParams(zeta_a=1.0, zeta_b=5.0, p_defend=0.9)
EPS = 1e-4


def toy_engine(**kwargs) -> ScenarioEngine:
    net = load_network("toy6")
    policy = TruncationPolicy(
        net.defaults.eps_p, net.defaults.k_max, net.defaults.outcome_cap
    )
    kwargs.setdefault("policy", policy)
    return ScenarioEngine(net, inspection=PARAMS, solver=OPTS, **kwargs)


class TestLinearizeProduct(TestCase):
    def test_single_binary_is_its_own_product(self):
        m = Model("m")
        b = m.add_var("b", binary=True)
        self.assertEqual(linearize_product(m, [b], "f"), (b, []))

    def test_empty_product_is_rejected(self):
        with self.assertRaises(ValueError):
            linearize_product(Model("m"), [], "f")

    def test_product_is_exact_at_binary_points(self):
        for values in ((1, 1, 1), (1, 1, 0), (0, 1, 0), (0, 0, 0)):
            for minimize in (False, True):
                m = Model("m")
                bs = [m.add_var(f"b{k}", binary=True) for k in range(3)]
                f, constrs = linearize_product(m, bs, "f")
                self.assertEqual(len(constrs), 4)
                for b, v in zip(bs, values):
                    m.fix(b, float(v))
                m.set_objective({f: 1.0}, minimize=minimize)
                sol = solve(m, OPTS)
                with self.subTest(values=values, minimize=minimize):
                    self.assertAlmostEqual(sol.x[f], float(all(values)))


class TestMasterBlocks(TestCase):
    def setUp(self):
        self.engine = toy_engine()

    def test_block_reproduces_expected_resilience(self):
        budgets = Budgets(1, 1, 1)
        attack = AttackPlan.of(["L2-3"], (1000.0, 1000.0))
        block = block_for_attack(self.engine, attack, budgets)
        self.assertEqual(len(block.values), 1 << len(block.variables))
        for mask in range(1 << len(block.variables)):
            chosen = [v for k, v in enumerate(block.variables) if mask >> k & 1]
            defense = DefensePlan.of(
                [i for kind, i in chosen if kind is TargetKind.line],
                [i for kind, i in chosen if kind is TargetKind.rcs],
            )
            with self.subTest(defense=str(defense)):
                self.assertAlmostEqual(
                    block.linearized_value(defense),
                    self.engine.expected_resilience(defense, attack),
                    delta=1e-9,
                )

    def test_block_skips_variables_without_budget(self):
        attack = AttackPlan.of(["L2-3"], (1000.0, 1000.0))
        block = block_for_attack(self.engine, attack, Budgets(0, 0, 1))
        self.assertEqual(block.variables, [])
        self.assertEqual(list(block.coefficients), [0])
        value = self.engine.expected_resilience(DefensePlan(), attack)
        self.assertAlmostEqual(block.coefficients[0], value)

    def test_block_refuses_too_many_monomials(self):
        policy = TruncationPolicy(eps_p=1e-3, k_max=12, outcome_cap=14)
        engine = toy_engine(policy=policy)
        lines = [line.id for line in engine.network.lines]
        captures = [0.5] * len(lines)
        with mock.patch.object(engine, "capture_probs", return_value=captures):
            with self.assertRaisesRegex(ScenarioCapError, "2\\^14 monomials"):
                attack = AttackPlan.of(lines, (0.0, 0.0))
                block_for_attack(engine, attack, Budgets(7, 7, 7))

    def test_master_needs_blocks(self):
        with self.assertRaises(ValueError):
            build_master(self.engine, [], Budgets(1, 1, 1))

    def test_master_respects_budgets(self):
        budgets = Budgets(1, 1, 1)
        attack = AttackPlan.of(["L2-3"], (1000.0, 1000.0))
        block = block_for_attack(self.engine, attack, budgets)
        defense, eta = solve_master(self.engine, [block], budgets)
        self.assertLessEqual(len(defense.hardened_lines), 1)
        self.assertLessEqual(len(defense.protected_rcs), 1)
        self.assertAlmostEqual(eta, block.linearized_value(defense), delta=1e-6)
        self.assertGreaterEqual(eta, block.values[0] - 1e-6)


class TestSubproblem(TestCase):
    def setUp(self):
        self.engine = toy_engine()

    def test_zero_attack_budget_leaves_network_intact(self):
        attack, value = solve_subproblem(self.engine, DefensePlan(), Budgets(1, 1, 0))
        self.assertEqual(attack, AttackPlan())
        self.assertAlmostEqual(value, 1.0)

    def test_subproblem_finds_the_minimum(self):
        budgets = Budgets(0, 0, 1)
        attack, value = solve_subproblem(self.engine, DefensePlan(), budgets)
        expected = self.engine.expected_resilience(DefensePlan(), attack)
        self.assertAlmostEqual(value, expected)
        for other in (
            AttackPlan.of(["L1-2"]),
            AttackPlan.of(["L5-6"], (0.0, 0.0)),
            AttackPlan.of(["L2-3"], (1000.0, 1000.0)),
        ):
            with self.subTest(attack=str(other)):
                self.assertLessEqual(
                    value, self.engine.expected_resilience(DefensePlan(), other) + 1e-12
                )

    def test_threads_give_the_same_attack(self):
        budgets = Budgets(0, 0, 1)
        serial = solve_subproblem(self.engine, DefensePlan(), budgets)
        pooled = solve_subproblem(toy_engine(threads=3), DefensePlan(), budgets)
        self.assertEqual(serial[0], pooled[0])
        self.assertAlmostEqual(serial[1], pooled[1], delta=1e-9)


class TestCCG(TestCase):
    def test_zero_budgets_converge_immediately(self):
        engine = toy_engine()
        solution = solve_ccg(engine, Budgets(0, 0, 0), eps=EPS)
        self.assertTrue(solution.converged)
        self.assertEqual(len(solution.trace), 1)
        self.assertEqual(solution.defense, DefensePlan())
        self.assertEqual(solution.worst_attack, AttackPlan())
        self.assertAlmostEqual(solution.value, 1.0)

    def test_ccg_matches_exhaustive_search(self):
        engine = toy_engine()
        budgets = Budgets(1, 1, 1)
        solution = solve_ccg(engine, budgets, eps=EPS)
        _, _, best = exhaustive_defense(engine, budgets)
        self.assertTrue(solution.converged)
        self.assertAlmostEqual(solution.value, best, delta=EPS)
        self.assertAlmostEqual(
            solution.value,
            engine.expected_resilience(solution.defense, solution.worst_attack),
            delta=1e-9,
        )

    def test_bounds_are_monotone(self):
        engine = toy_engine()
        solution = solve_ccg(engine, Budgets(1, 1, 1), eps=EPS)
        uppers = [rec.upper_bound for rec in solution.trace]
        lowers = [rec.lower_bound for rec in solution.trace]
        expected = list(range(1, len(uppers) + 1))
        self.assertEqual([rec.k for rec in solution.trace], expected)
        for a, b in zip(uppers, uppers[1:]):
            self.assertLessEqual(b, a + 1e-9)
        for a, b in zip(lowers, lowers[1:]):
            self.assertGreaterEqual(b, a - 1e-12)
        self.assertLessEqual(lowers[-1], uppers[-1] + 1e-9)

    def test_iteration_limit_is_reported(self):
        engine = toy_engine()
        # Defending the first worst attack's target lifts the master bound
        # above that attack's value, so one iteration leaves a gap.
        solution = solve_ccg(engine, Budgets(1, 1, 1), eps=EPS, max_iter=1)
        self.assertFalse(solution.converged)
        self.assertEqual(len(solution.trace), 1)
        record = solution.trace[0]
        self.assertEqual(record.k, 1)
        self.assertGreater(record.upper_bound - record.lower_bound, EPS)
        self.assertAlmostEqual(solution.value, record.lower_bound)
        self.assertEqual(solution.worst_attack, record.attack)

    def test_eps_must_be_positive(self):
        with self.assertRaises(ValueError):
            solve_ccg(toy_engine(), Budgets(), eps=0.0)

    @skipUnless(SLOW_TESTS, SLOW_REASON)
    def test_ccg_matches_exhaustive_search_with_larger_budgets(self):
        engine = toy_engine()
        budgets = Budgets(2, 2, 2)
        solution = solve_ccg(engine, budgets, eps=EPS)
        _, _, best = exhaustive_defense(engine, budgets)
        self.assertTrue(solution.converged)
        self.assertAlmostEqual(solution.value, best, delta=EPS)
