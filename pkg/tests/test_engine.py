"""Placement, precoder synthesis, and end-to-end delivery."""

from fractions import Fraction
from itertools import product
from pathlib import Path

import pytest

from mapda.arrays import STAR, Mapda, ParseError, generate_cyclic, generate_mn_pda, replicate
from mapda.engine import (
    DegenerateChannel,
    PacketId,
    build_instance,
    channel_from_matrix,
    default_demands,
    make_channel,
    parse_channel_fixture,
    parse_library_fixture,
    random_library,
    read_channel_fixture,
    run_delivery,
    run_slot,
    synthesize_precoder,
)
from mapda.linalg import EXACT, FLOAT, DimensionMismatch, Infeasible, Matrix

from oracles import vandermonde_channel

FIXTURES = Path(__file__).parent / "fixtures"

V1_EXPECTED = [
    [0, Fraction(21, 4), 0, Fraction(-13, 4)],
    [Fraction(21, 4), 0, Fraction(-11, 4), 0],
    [0, Fraction(-11, 4), 0, Fraction(7, 4)],
    [Fraction(-13, 4), 0, Fraction(7, 4), 0],
]
B1_EXPECTED = [
    [1, Fraction(3, 2), 0, Fraction(-1, 2)],
    [Fraction(1, 2), 1, Fraction(1, 2), 0],
    [0, Fraction(1, 2), 1, Fraction(1, 2)],
    [Fraction(-1, 2), 0, Fraction(3, 2), 1],
]


@pytest.fixture
def example1():
    return replicate(generate_mn_pda(3, 1), 2)


@pytest.fixture
def example1_instance(example1):
    return build_instance(example1, files=6)


@pytest.fixture
def fixture_channel():
    return read_channel_fixture(FIXTURES / "channel_2x6.txt")


class TestBuildInstance:
    def test_placement_sets(self, example1_instance):
        inst = example1_instance
        for user, part in ((1, 1), (4, 1), (2, 2), (5, 2), (3, 3), (6, 3)):
            assert inst.cache_of(user) == frozenset(
                PacketId(n, part) for n in range(1, 7)
            )
        assert inst.memory_ratio == Fraction(1, 3)

    def test_slot_one_group(self, example1_instance):
        group = example1_instance.groups[0]
        assert group.served_users == (1, 2, 4, 5)
        assert group.served_rows == (2, 1, 2, 1)
        assert [sorted(z) for z in group.zero_sets] == [[2], [3], [0], [1]]

    def test_smallest_instance_single_slot(self):
        inst = build_instance(generate_mn_pda(2, 1), files=2)
        assert len(inst.groups) == 1
        assert inst.groups[0].served_users == (1, 2)

    def test_group_cacher_sets(self, example1_instance):
        group = example1_instance.groups[0]
        # Packet rows (2,1,2,1): row 2 is cached by users 2 and 5
        # (positions 1, 3), row 1 by users 1 and 4 (positions 0, 2).
        assert group.cacher_sets == ((1, 3), (0, 2), (1, 3), (0, 2))


class TestSynthesize:
    def test_worked_precoder(self, example1_instance, fixture_channel):
        group = example1_instance.groups[0]
        pre = synthesize_precoder(group, fixture_channel, default_demands(6, 6))
        assert pre.matrix.to_rows() == [
            [Fraction(x) for x in row] for row in V1_EXPECTED
        ]

    def test_worked_receive_matrix(self, example1_instance, fixture_channel):
        group = example1_instance.groups[0]
        pre = synthesize_precoder(group, fixture_channel)
        assert pre.combined.to_rows() == [
            [Fraction(x) for x in row] for row in B1_EXPECTED
        ]

    def test_two_user_antidiagonal(self):
        # Two cross-caching users behind one antenna with unit gains: each
        # column has a single 1x1 system, giving the anti-diagonal of ones.
        inst = build_instance(generate_mn_pda(2, 1), files=2)
        channel = channel_from_matrix(Matrix.from_rows([[1, 1]], EXACT))
        pre = synthesize_precoder(inst.groups[0], channel)
        assert pre.matrix.to_rows() == [[0, 1], [1, 0]]

    def test_sparsity_pattern(self, example1_instance):
        channel = channel_from_matrix(vandermonde_channel(2, 6))
        for group in example1_instance.groups:
            v = synthesize_precoder(group, channel).matrix
            for i in range(len(group.served_users)):
                for j in range(len(group.served_users)):
                    if i not in group.cacher_sets[j]:
                        assert v.at(i, j) == 0

    def test_b_constraints_exact(self):
        channel6 = channel_from_matrix(vandermonde_channel(2, 6))
        for m in (replicate(generate_mn_pda(3, 1), 2), generate_cyclic(4, 2), generate_cyclic(6, 3)):
            channel = (
                channel6
                if m.antennas == 2
                else channel_from_matrix(vandermonde_channel(m.antennas, m.cols))
            )
            for group in build_instance(m, files=2).groups:
                pre = synthesize_precoder(group, channel)
                b = pre.combined
                for l in range(len(group.served_users)):
                    assert b.at(l, l) == 1
                    for j in group.zero_sets[l]:
                        assert b.at(l, j) == 0

    def test_low_redundancy_is_infeasible(self):
        # Declaring two antennas over the single-antenna star pattern drops
        # the density below the t >= L gate: every slot must refuse.
        m = Mapda(generate_mn_pda(3, 1).grid, antennas=2)
        inst = build_instance(m, files=3)
        channel = channel_from_matrix(vandermonde_channel(2, 3))
        for group in inst.groups:
            with pytest.raises(Infeasible):
                synthesize_precoder(group, channel)

    def test_degenerate_channel_detected(self, example1_instance):
        bad = channel_from_matrix(
            Matrix.from_rows([[1, 1, 1, 1, 1, 1], [2, 2, 4, 2, 2, 7]], EXACT)
        )
        with pytest.raises(DegenerateChannel):
            synthesize_precoder(example1_instance.groups[0], bad)

    def test_channel_shape_checked(self, example1_instance):
        with pytest.raises(DimensionMismatch):
            synthesize_precoder(
                example1_instance.groups[0],
                channel_from_matrix(vandermonde_channel(3, 6)),
            )


class TestRunSlot:
    def test_worked_decode(self, example1_instance, fixture_channel):
        # User 1 hears its packet plus 3/2 and -1/2 of two packets it
        # caches; after subtracting them it recovers file 1's part 2.
        library = random_library(6, 3, seed=5)
        demands = default_demands(6, 6)
        outcome = run_slot(
            example1_instance.groups[0], fixture_channel, demands, library
        )
        by_user = {user: (packet, value) for user, packet, value in outcome.recovered}
        assert by_user[1][0] == PacketId(1, 2)
        assert by_user[1][1] == library.at(0, 1)
        assert by_user[2][0] == PacketId(2, 1)
        assert by_user[4][0] == PacketId(4, 2)
        assert by_user[5][0] == PacketId(5, 1)
        assert outcome.residual_max == 0.0

    def test_zero_library_decodes_zeros(self, example1_instance, fixture_channel):
        zero_lib = Matrix.from_rows([[0] * 3 for _ in range(6)], EXACT)
        outcome = run_slot(
            example1_instance.groups[0],
            fixture_channel,
            default_demands(6, 6),
            zero_lib,
        )
        assert all(value == 0 for _, _, value in outcome.recovered)


class TestRunDelivery:
    def test_example1_exact_end_to_end(self, example1, example1_instance, fixture_channel):
        library = random_library(6, 3, seed=17)
        demands = default_demands(6, 6)
        report = run_delivery(example1_instance, fixture_channel, demands, library)
        assert report.ndt_ul == 1
        assert report.ndt_dl == 1
        assert report.ops_model == 264
        for user in range(1, 7):
            non_star_rows = [
                f + 1 for f in range(3) if example1.grid[f][user - 1] is not STAR
            ]
            assert report.recovered[user] == frozenset(
                PacketId(demands[user - 1], f) for f in non_star_rows
            )

    def test_all_demand_vectors_on_smallest_instance(self):
        inst = build_instance(generate_mn_pda(2, 1), files=2)
        channel = channel_from_matrix(vandermonde_channel(1, 2))
        library = random_library(2, 2, seed=3)
        for demands in product((1, 2), repeat=2):
            report = run_delivery(inst, channel, demands, library)
            assert report.ndt_ul == Fraction(1, 2)

    def test_identical_demands_decode(self, example1_instance, fixture_channel):
        library = random_library(6, 3, seed=29)
        report = run_delivery(
            example1_instance, fixture_channel, (1,) * 6, library
        )
        assert all(r.feasible for r in report.slots)

    def test_float_backend_seeds(self, example1):
        inst = build_instance(example1, files=6)
        demands = default_demands(6, 6)
        for seed in range(10):
            channel = make_channel(2, 6, seed=seed)
            library = random_library(6, 3, seed=seed, backend=FLOAT)
            report = run_delivery(inst, channel, demands, library)
            assert max(r.residual_max for r in report.slots) <= 1e-8

    def test_gate_refuses_low_density(self):
        m = Mapda(generate_mn_pda(3, 1).grid, antennas=2)
        inst = build_instance(m, files=3)
        channel = channel_from_matrix(vandermonde_channel(2, 3))
        library = random_library(3, 3, seed=1)
        demands = default_demands(3, 3)
        with pytest.raises(Infeasible):
            run_delivery(inst, channel, demands, library)
        # Forcing past the gate reaches the per-slot refusal instead.
        with pytest.raises(Infeasible) as info:
            run_delivery(inst, channel, demands, library, force=True)
        assert info.value.slot == 1

    def test_one_shot_regular_arrays(self):
        # Arrays whose slots all occur exactly t+L times decode one-shot on
        # a generic channel, for every demand vector.
        cases = [generate_cyclic(k, t) for k in range(2, 6) for t in range(1, k)]
        for m in cases:
            if not m.profile.star_density_ok:
                continue
            assert m.profile.regular
            inst = build_instance(m, files=2)
            channel = channel_from_matrix(vandermonde_channel(m.antennas, m.cols))
            library = random_library(2, m.rows, seed=13)
            precoders = [
                synthesize_precoder(g, channel) for g in inst.groups
            ]
            for demands in product((1, 2), repeat=m.cols):
                run_delivery(inst, channel, demands, library, precoders=precoders)

    def test_irregular_underfilled_slot_is_infeasible(self):
        # Valid array, t = L = 1, but slot 1 serves a user whose packet no
        # served user caches: undeliverable in this protocol, and the
        # engine must say so rather than mis-decode.
        m = Mapda(((STAR, 1), (2, STAR)), antennas=1)
        assert not m.profile.regular
        inst = build_instance(m, files=2)
        channel = channel_from_matrix(vandermonde_channel(1, 2))
        with pytest.raises(Infeasible):
            synthesize_precoder(inst.groups[0], channel)

    def test_all_star_array_has_nothing_to_deliver(self):
        # Full caching: no slots, zero delivery time, vacuous success.
        m = Mapda(((STAR, STAR), (STAR, STAR)), antennas=1)
        inst = build_instance(m, files=2)
        assert inst.groups == ()
        report = run_delivery(
            inst,
            channel_from_matrix(vandermonde_channel(1, 2)),
            (1, 2),
            random_library(2, 2, seed=0),
        )
        assert report.ndt_ul == 0
        assert all(not packets for packets in report.recovered.values())

    def test_library_shape_checked(self, example1_instance, fixture_channel):
        with pytest.raises(DimensionMismatch):
            run_delivery(
                example1_instance,
                fixture_channel,
                default_demands(6, 6),
                random_library(6, 4, seed=0),
            )

    def test_ops_measured_nonzero(self, example1_instance, fixture_channel):
        report = run_delivery(
            example1_instance,
            fixture_channel,
            default_demands(6, 6),
            random_library(6, 3, seed=2),
        )
        assert report.ops_measured["precoder_synthesis"]["mul"] > 0
        assert report.ops_measured["uplink_encode"]["mul"] > 0
        assert set(report.ops_measured) == {
            "precoder_synthesis",
            "uplink_encode",
            "bs_forward",
            "user_decode",
        }


class TestChannels:
    def test_seeded_channels_deterministic(self):
        assert make_channel(2, 6, seed=42).matrix == make_channel(2, 6, seed=42).matrix
        assert make_channel(2, 6, seed=42).matrix != make_channel(2, 6, seed=43).matrix

    def test_fixture_restriction_matches_worked_channel(self, fixture_channel):
        h = fixture_channel.matrix.take(range(2), [0, 1, 3, 4])
        assert h.to_rows() == [[1, 1, 1, 1], [2, 3, 4, 5]]

    def test_fixture_parsing_scalar_forms(self):
        ch = parse_channel_fixture("2 2\n1/2 3\n1+2i -1i\n")
        assert ch.matrix.backend == FLOAT
        assert ch.matrix.at(0, 0) == 0.5
        assert ch.matrix.at(1, 0) == 1 + 2j
        assert ch.matrix.at(1, 1) == -1j
        exact = parse_channel_fixture("1 2\n1/3 4\n")
        assert exact.matrix.backend == EXACT
        assert exact.matrix.at(0, 0) == Fraction(1, 3)

    def test_fixture_parse_errors(self):
        with pytest.raises(ParseError):
            parse_channel_fixture("2 2\n1 2\n")
        with pytest.raises(ParseError):
            parse_channel_fixture("1 2\n1 x\n")
        with pytest.raises(ParseError):
            parse_channel_fixture("")

    def test_library_fixture(self):
        lib = parse_library_fixture("2 3\n1 2 3\n4 5 6\n")
        assert lib.n_rows == 2
        assert lib.at(1, 2) == 6

    def test_random_library_deterministic(self):
        assert random_library(3, 4, seed=9) == random_library(3, 4, seed=9)
