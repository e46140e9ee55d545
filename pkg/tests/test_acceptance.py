"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line with the measured values.

The error-curve criteria (1 and 2) share one sweep computed at module scope.
Mining difficulty for the sweep is 8 bits rather than the CLI default 12:
difficulty changes only nonce values, never ledger content or errors, and
criterion 6 separately proves difficulty-12 mining performance.
"""

import math
import random
import statistics
import time

import pytest

from blockloc.adversary import falsify_position
from blockloc import chain
from blockloc.chain import (
    Block,
    Ledger,
    RejectReason,
    build_genesis,
    check_block_structure,
    make_claim,
    mine_block,
    append_block,
    rebuild_position_index,
    validate_chain,
    verify_position_claim,
)
from blockloc.experiment import ExperimentPlan, derive_run_seed, run_experiment
from blockloc.geometry import (
    PathLossParams,
    Position,
    distance_from_rss,
    rss_at_distance,
    trilaterate,
)
from blockloc.identity import DecodeError, decode_block, decode_claim, generate_keypair
from blockloc.netsim import Mode, Role, SimConfig, deploy, run_localization
from blockloc.reporting import emit_csv, emit_plot_data
from oracles import grid_search_position

RATES = (0.1, 0.2, 0.3, 0.4, 0.5)
SWEEP_DIFFICULTY = 8
BASE_SEED = 1


def report(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} - {detail}")


def _cell_mean(anchor_rate, malicious_rate, mode):
    runs = [
        run_localization(
            SimConfig(
                anchor_rate=anchor_rate,
                malicious_rate=malicious_rate,
                mode=mode,
                difficulty=SWEEP_DIFFICULTY,
                seed=derive_run_seed(BASE_SEED, anchor_rate, malicious_rate, i),
            )
        )
        for i in range(10)
    ]
    return statistics.mean(r.mean_error for r in runs)


@pytest.fixture(scope="module")
def sweep():
    """Error-curve sweep: criterion 1 uses the 20%-anchor block (timed); criterion 2
    additionally needs the 50%-anchor block."""
    t0 = time.perf_counter()
    insecure_20 = [_cell_mean(0.2, mr, Mode.INSECURE) for mr in RATES]
    secure_20 = [_cell_mean(0.2, mr, Mode.SECURE) for mr in RATES]
    criterion1_seconds = time.perf_counter() - t0
    secure_50 = [_cell_mean(0.5, mr, Mode.SECURE) for mr in RATES]
    insecure_50_at_half = _cell_mean(0.5, 0.5, Mode.INSECURE)
    return {
        "insecure_20": insecure_20,
        "secure_20": secure_20,
        "secure_50": secure_50,
        "insecure_50_at_half": insecure_50_at_half,
        "criterion1_seconds": criterion1_seconds,
    }


def _monotone_with_one_small_violation(values, tolerance=0.05):
    violations = [(b - a) / a for a, b in zip(values, values[1:]) if b <= a]
    return len(violations) == 0 or (len(violations) == 1 and abs(violations[0]) <= tolerance)


class TestCriterion1ErrorCurveTrends:
    def test_insecure_error_increases_with_malicious_rate(self, sweep):
        ok = _monotone_with_one_small_violation(sweep["insecure_20"])
        report(
            "1a", ok,
            "insecure curve " + " ".join(f"{v:.2f}" for v in sweep["insecure_20"]),
        )
        assert ok

    def test_secure_halves_error_at_half_malicious(self, sweep):
        ratio = sweep["secure_20"][-1] / sweep["insecure_20"][-1]
        ok = ratio <= 0.5
        report(
            "1b", ok,
            f"secure/insecure at 50% malicious = {ratio:.3f} "
            f"(bound 0.5, paper-consistent target 0.35 {'met' if ratio <= 0.35 else 'not met'})",
        )
        assert ok

    def test_secure_curve_spread_bounded(self, sweep):
        spread = max(sweep["secure_20"]) / min(sweep["secure_20"])
        ok = spread <= 2.0
        report(
            "1c", ok,
            f"secure spread {spread:.2f} over " + " ".join(f"{v:.2f}" for v in sweep["secure_20"]),
        )
        assert ok

    def test_sweep_runtime_bounded(self, sweep):
        ok = sweep["criterion1_seconds"] <= 60.0
        report("1-runtime", ok, f"criterion-1 sweep took {sweep['criterion1_seconds']:.1f}s")
        assert ok


class TestCriterion2AnchorRateDirections:
    def test_more_anchors_reduce_secure_error(self, sweep):
        increases = [
            (b - a) / a for a, b in zip(sweep["secure_20"], sweep["secure_50"]) if b >= a
        ]
        ok = len(increases) == 0 or (len(increases) == 1 and abs(increases[0]) <= 0.05)
        report(
            "2-secure", ok,
            "anchor 0.2 " + " ".join(f"{v:.2f}" for v in sweep["secure_20"])
            + " vs 0.5 " + " ".join(f"{v:.2f}" for v in sweep["secure_50"]),
        )
        assert ok

    def test_more_anchors_increase_insecure_error_at_half_malicious(self, sweep):
        ok = sweep["insecure_50_at_half"] > sweep["insecure_20"][-1]
        report(
            "2-insecure", ok,
            f"insecure at 50% malicious: anchors 0.2 -> {sweep['insecure_20'][-1]:.2f}, "
            f"anchors 0.5 -> {sweep['insecure_50_at_half']:.2f}",
        )
        assert ok


class TestCriterion3ZeroMaliciousEquivalence:
    def test_secure_equals_insecure_without_attackers(self):
        ok = True
        for seed in (1, 77, 4096):
            results = {}
            for mode in (Mode.SECURE, Mode.INSECURE):
                cfg = SimConfig(
                    malicious_rate=0.0, slack=math.inf, mode=mode, difficulty=4, seed=seed
                )
                results[mode] = run_localization(cfg).to_json()
            ok = ok and results[Mode.SECURE] == results[Mode.INSECURE]
        report("3", ok, "secure == insecure byte-identical for seeds 1, 77, 4096")
        assert ok


class TestCriterion4NoiseFreeExactness:
    def test_dense_noise_free_estimates_are_exact(self):
        cfg = SimConfig(
            n_nodes=24,
            area=(40.0, 40.0),
            range_r=60.0,  # complete graph: every pair within range
            anchor_rate=0.4,
            malicious_rate=0.0,
            pathloss=PathLossParams(sigma=0.0),
            difficulty=0,
            seed=8,
            mode=Mode.SECURE,
        )
        topo = deploy(cfg, random.Random(cfg.seed))
        anchors = {n.node_id for n in topo.nodes if n.role is Role.ANCHOR}
        for node in topo.nodes:
            if node.role is Role.UNKNOWN:
                one_hop_anchors = sum(
                    1 for nid in topo.adjacency[node.node_id] if nid in anchors
                )
                assert one_hop_anchors >= 3  # premise of the criterion

        result = run_localization(cfg)
        worst = max(result.per_node_error.values(), default=math.inf)
        ok = result.unlocalized_count == 0 and worst <= 1e-6
        report(
            "4", ok,
            f"{result.localized_count} nodes localized, worst error {worst:.2e} m",
        )
        assert ok


def _random_chain(rng, length, difficulty):
    ledger = Ledger()
    for _ in range(length):
        claim = make_claim(
            generate_keypair(rng),
            Position(rng.uniform(0, 100), rng.uniform(0, 100)),
            [rng.randbytes(32) for _ in range(rng.randint(0, 2))],
        )
        block = mine_block(claim, ledger.blocks[-1] if ledger.blocks else None, difficulty)
        append_block(ledger, block, difficulty)
    return ledger


def _decode_exported_block(data):
    index, prev_hash, nonce, claim_bytes, stored_hash = decode_block(data)
    node_id, public_key, position, neighbor_ids, signature = decode_claim(claim_bytes)
    claim = chain.LocationClaim(
        node_id=node_id,
        public_key=public_key,
        position=position,
        neighbor_ids=tuple(neighbor_ids),
        signature=signature,
    )
    return Block(index=index, prev_hash=prev_hash, nonce=nonce, claim=claim, hash=stored_hash)


def _first_failure_from(blocks, start, difficulty):
    """First failing block index >= start, given blocks[:start] are intact.

    Equivalent to full-chain validation because the untouched prefix is
    verified valid once per chain; a sampled cross-check against
    validate_chain below guards the shortcut itself.
    """
    prev_hash = chain.ZERO_DIGEST if start == 0 else blocks[start - 1].hash
    for i in range(start, len(blocks)):
        if check_block_structure(blocks[i], prev_hash, i, difficulty) is not RejectReason.OK:
            return i
        prev_hash = blocks[i].hash
    return len(blocks)


class TestCriterion5TamperEvidence:
    def test_every_byte_flip_is_detected(self):
        difficulty = 6
        rng = random.Random(505)
        cross_check_rng = random.Random(606)
        total_flips = 0
        worst_gap = -1
        for chain_idx in range(100):
            ledger = _random_chain(rng, 20, difficulty)
            ok, _, _ = validate_chain(ledger, difficulty)
            assert ok  # intact chain must validate before we tamper
            encodings = [b.encode() for b in ledger.blocks]
            for i, encoded in enumerate(encodings):
                for pos in range(len(encoded)):
                    total_flips += 1
                    mutated = bytearray(encoded)
                    mutated[pos] ^= 0xFF
                    try:
                        bad_block = _decode_exported_block(bytes(mutated))
                    except DecodeError:
                        continue  # framing broken: detected while parsing block i
                    blocks = list(ledger.blocks)
                    blocks[i] = bad_block
                    detected_at = _first_failure_from(blocks, i, difficulty)
                    assert detected_at <= i, (chain_idx, i, pos)
                    worst_gap = max(worst_gap, i - detected_at)
                    if cross_check_rng.random() < 0.0005:
                        mutated_ledger = Ledger(
                            blocks=blocks, position_index=rebuild_position_index(blocks)
                        )
                        full_ok, full_idx, _ = validate_chain(mutated_ledger, difficulty)
                        assert not full_ok and full_idx == detected_at
        report("5", True, f"{total_flips} byte flips across 100 chains all detected at the tampered block")


class TestCriterion6ProofOfWork:
    def test_thousand_blocks_at_twelve_bits(self):
        rng = random.Random(66)
        prev = None
        start = time.perf_counter()
        for i in range(1000):
            claim = make_claim(
                generate_keypair(rng), Position(rng.uniform(0, 100), rng.uniform(0, 100)), []
            )
            block = mine_block(claim, prev, difficulty=12)
            assert int.from_bytes(block.hash, "big") >> (256 - 12) == 0
            prev = block
        mean_seconds = (time.perf_counter() - start) / 1000
        ok = mean_seconds < 1.0
        report("6", ok, f"1000 blocks mined at 12 bits, mean {mean_seconds*1e3:.2f} ms/block")
        assert ok


class TestCriterion7TrilaterationOracle:
    def test_least_squares_matches_grid_search(self):
        rng = random.Random(20260811)
        worst = 0.0
        for _ in range(200):
            target = (rng.uniform(20, 80), rng.uniform(20, 80))
            refs = []
            for q in range(5):
                angle = (q + 0.5 * rng.random()) * 2 * math.pi / 5
                dist = rng.uniform(18, 26)
                p = (
                    min(100.0, max(0.0, target[0] + dist * math.cos(angle))),
                    min(100.0, max(0.0, target[1] + dist * math.sin(angle))),
                )
                d = math.hypot(p[0] - target[0], p[1] - target[1]) + rng.gauss(0, 0.02)
                refs.append((p, max(0.5, d)))
            gx, gy = grid_search_position(refs, (100.0, 100.0))
            est = trilaterate([(Position(*p), d) for p, d in refs])
            worst = max(worst, math.hypot(est.x - gx, est.y - gy))
        ok = worst <= 0.05
        report("7", ok, f"worst |least-squares - grid argmin| = {worst:.4f} m over 200 instances")
        assert ok


class TestCriterion8RssiRoundTrip:
    def test_relative_error_within_1e9(self):
        rng = random.Random(88)
        params_sets = [PathLossParams(), PathLossParams(tau=2.0), PathLossParams(tau=4.5, d0=2.0)]
        worst = 0.0
        for params in params_sets:
            for _ in range(20_000):
                d = 10.0 ** rng.uniform(-6, 3)  # spans (0, 1000]
                back = distance_from_rss(rss_at_distance(d, params), params)
                worst = max(worst, abs(back - d) / d)
            for d in (1e-9, 1.0, 999.999, 1000.0):
                back = distance_from_rss(rss_at_distance(d, params), params)
                worst = max(worst, abs(back - d) / d)
        ok = worst <= 1e-9
        report("8", ok, f"worst relative round-trip error {worst:.2e}")
        assert ok


class TestCriterion9Determinism:
    def test_full_plan_rerun_is_byte_identical(self, tmp_path):
        plan = ExperimentPlan(
            base=SimConfig(n_nodes=40, area=(80.0, 80.0), range_r=28.0, difficulty=4),
            anchor_rates=(0.2, 0.5),
            malicious_rates=(0.1, 0.3, 0.5),
            modes=(Mode.SECURE, Mode.INSECURE),
            runs_per_cell=3,
            base_seed=1234,
        )
        outputs = []
        for tag in ("first", "second"):
            csv_path = tmp_path / f"{tag}.csv"
            dat_path = tmp_path / f"{tag}.dat"
            results = run_experiment(plan)
            emit_csv(results, csv_path)
            emit_plot_data(results, dat_path)
            outputs.append((csv_path.read_bytes(), dat_path.read_bytes()))
        ok = outputs[0] == outputs[1]
        report("9", ok, f"rerun identical: csv {len(outputs[0][0])} bytes, plot {len(outputs[0][1])} bytes")
        assert ok


class TestCriterion10VicinityRule:
    def test_forged_position_rejected_honest_accepted(self):
        # Four honest anchors surround the claimant's true position (40, 0);
        # scaling it by 1.5 puts the claim 41.2 m from the anchor at (20, 10).
        anchor_coords = [(20.0, 10.0), (30.0, 15.0), (50.0, 12.0), (45.0, -10.0)]
        keypairs = [generate_keypair(random.Random(900 + i)) for i in range(4)]
        ids = [chain.identity.derive_identity(kp.public_key) for kp in keypairs]
        anchor_claims = []
        for i, (kp, (x, y)) in enumerate(zip(keypairs, anchor_coords)):
            neighbors = [
                ids[j]
                for j in range(4)
                if j != i
                and math.hypot(x - anchor_coords[j][0], y - anchor_coords[j][1]) <= 30.0
            ]
            anchor_claims.append(make_claim(kp, Position(x, y), neighbors))
        ledger, rejected = build_genesis(anchor_claims, range_r=30.0, slack=1.0)
        assert rejected == 0

        claimant = generate_keypair(random.Random(999))
        true_pos = Position(40.0, 0.0)
        for (x, y) in anchor_coords:
            assert math.hypot(true_pos.x - x, true_pos.y - y) <= 30.0

        honest = make_claim(claimant, true_pos, ids)
        fake = make_claim(claimant, falsify_position(true_pos, 1.5), ids)
        honest_out = verify_position_claim(honest, ledger, 30.0, 1.0, min_verifiable_neighbors=4)
        fake_out = verify_position_claim(fake, ledger, 30.0, 1.0, min_verifiable_neighbors=4)
        ok = honest_out.accepted and fake_out.reason is RejectReason.VICINITY_VIOLATION
        report(
            "10", ok,
            f"honest claim {honest_out.reason.value}, forged claim {fake_out.reason.value}",
        )
        assert ok
