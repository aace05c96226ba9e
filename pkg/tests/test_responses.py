import json

import numpy as np
import pytest

from kgquiz.responses import (
    DuplicateResponseError,
    InsufficientDataError,
    NotPresentedError,
    QuizItem,
    ResponseStore,
    UnknownMcqError,
    simulate_responses,
)


def make_items(n: int = 4) -> list[QuizItem]:
    return [
        QuizItem(
            mcq_id=f"m{i}",
            stem=f"Question {i}?",
            key_name=f"Key{i}",
            distractor_names=(f"D{i}a", f"D{i}b", f"D{i}c"),
        )
        for i in range(n)
    ]


def answer_correctly(store: ResponseStore, session: str, mcq_id: str, liking=None):
    options, key_position = store.options_for(session, mcq_id)
    return store.record_response(
        session, mcq_id, key_position, liking=liking, enforce_presented=False
    )


class TestServing:
    def test_fresh_session_gets_least_answered(self):
        store = ResponseStore(make_items())
        first = store.next_question("alice")
        assert first["mcq_id"] == "m0"  # all counts zero, id ties break ascending
        store.record_response("alice", "m0", 0)
        second = store.next_question("bob")
        assert second["mcq_id"] == "m1"  # m0 now has one response

    def test_option_order_stable_per_session_and_mcq(self):
        store = ResponseStore(make_items())
        o1, k1 = store.options_for("alice", "m0")
        o2, k2 = store.options_for("alice", "m0")
        assert o1 == o2 and k1 == k2
        o3, _ = store.options_for("bob", "m0")
        assert sorted(o3) == sorted(o1)

    def test_options_contain_key_and_three_distractors(self):
        store = ResponseStore(make_items())
        options, key_position = store.options_for("s", "m2")
        assert len(options) == 4
        assert options[key_position] == "Key2"
        assert set(options) == {"Key2", "D2a", "D2b", "D2c"}

    def test_exhausted_session_gets_complete_marker(self):
        store = ResponseStore(make_items(2))
        for _ in range(2):
            question = store.next_question("solo")
            store.record_response("solo", question["mcq_id"], 0)
        assert store.next_question("solo") is None

    def test_progress_counts_session_answers(self):
        store = ResponseStore(make_items(3))
        question = store.next_question("s")
        assert question["progress"] == {"answered": 0, "total": 3}
        store.record_response("s", question["mcq_id"], 1)
        question = store.next_question("s")
        assert question["progress"] == {"answered": 1, "total": 3}


class TestRecording:
    def test_correct_flag_derived_from_key_position(self):
        store = ResponseStore(make_items())
        store.next_question("s")
        options, key_position = store.options_for("s", "m0")
        record = store.record_response("s", "m0", key_position)
        assert record.correct is True
        record2 = store.record_response("s", "m1", (store.options_for("s", "m1")[1] + 1) % 4,
                                        enforce_presented=False)
        assert record2.correct is False

    def test_duplicate_submission_conflicts(self):
        store = ResponseStore(make_items())
        store.next_question("s")
        store.record_response("s", "m0", 0)
        with pytest.raises(DuplicateResponseError):
            store.record_response("s", "m0", 1)

    def test_unknown_mcq(self):
        store = ResponseStore(make_items())
        with pytest.raises(UnknownMcqError):
            store.record_response("s", "ghost", 0)

    def test_unpresented_mcq_rejected(self):
        store = ResponseStore(make_items())
        with pytest.raises(NotPresentedError):
            store.record_response("s", "m3", 0)

    def test_liking_out_of_range_rejected(self):
        store = ResponseStore(make_items())
        store.next_question("s")
        with pytest.raises(ValueError):
            store.record_response("s", "m0", 0, liking=101)

    def test_liking_66_surfaces_as_0_66(self):
        store = ResponseStore(make_items())
        record = answer_correctly(store, "s", "m0", liking=66)
        assert record.liking == 66  # the record keeps the submitted integer
        stats = store.mcq_stats("m0")
        assert stats.mean_liking == pytest.approx(0.66)


class TestStats:
    def test_incorrect_rate_division(self):
        store = ResponseStore(make_items(1))
        for i in range(38):
            session = f"s{i}"
            _, key_pos = store.options_for(session, "m0")
            option = key_pos if i >= 13 else (key_pos + 1) % 4
            store.record_response(session, "m0", option, enforce_presented=False)
        stats = store.mcq_stats("m0")
        assert stats.responses == 38
        assert stats.incorrect_rate == pytest.approx(13 / 38, abs=1e-12)

    def test_zero_responses_rates_absent(self):
        store = ResponseStore(make_items())
        stats = store.mcq_stats("m0")
        assert stats.responses == 0
        assert stats.incorrect_rate is None
        assert stats.mean_liking is None

    def test_all_correct_zero_rate(self):
        store = ResponseStore(make_items(1))
        for i in range(5):
            answer_correctly(store, f"s{i}", "m0")
        assert store.mcq_stats("m0").incorrect_rate == 0.0

    def test_recomputed_rate_equals_aggregate(self):
        store = ResponseStore(make_items(2))
        rng = np.random.default_rng(0)
        for i in range(30):
            session = f"s{i}"
            for mcq_id in ("m0", "m1"):
                _, key_pos = store.options_for(session, mcq_id)
                option = key_pos if rng.random() < 0.5 else (key_pos + 1) % 4
                store.record_response(session, mcq_id, option, enforce_presented=False)
        for mcq_id in ("m0", "m1"):
            records = [r for r in store.records if r.mcq_id == mcq_id]
            brute = sum(1 for r in records if not r.correct) / len(records)
            assert store.mcq_stats(mcq_id).incorrect_rate == pytest.approx(brute, abs=1e-15)


class TestCorpusStats:
    def fill(self, store, rates_and_likings):
        """rates as (mcq_id, n_wrong, n_total, liking 0..100)."""
        for mcq_id, wrong, total, liking in rates_and_likings:
            for i in range(total):
                session = f"{mcq_id}-s{i}"
                _, key_pos = store.options_for(session, mcq_id)
                option = (key_pos + 1) % 4 if i < wrong else key_pos
                store.record_response(
                    session, mcq_id, option, liking=liking, enforce_presented=False
                )

    def test_liking_exactly_inverse_of_difficulty_gives_minus_one(self):
        store = ResponseStore(make_items(3))
        self.fill(store, [
            ("m0", 2, 10, 80),   # rate 0.2, liking 0.8
            ("m1", 5, 10, 50),   # rate 0.5, liking 0.5
            ("m2", 9, 10, 10),   # rate 0.9, liking 0.1
        ])
        stats = store.corpus_stats()
        assert stats.liking_difficulty_pearson == pytest.approx(-1.0, abs=1e-12)
        assert stats.mean_incorrect_rate == pytest.approx((0.2 + 0.5 + 0.9) / 3)

    def test_uniform_labels_correlation_missing(self):
        store = ResponseStore(make_items(2))
        self.fill(store, [("m0", 5, 10, 50), ("m1", 5, 10, 70)])
        stats = store.corpus_stats()
        assert stats.liking_difficulty_pearson is None  # difficulty constant

    def test_histogram_sums_to_labeled_mcqs(self):
        store = ResponseStore(make_items(4))
        self.fill(store, [("m0", 1, 10, 60), ("m1", 3, 10, 60), ("m2", 9, 10, 60)])
        stats = store.corpus_stats()
        assert sum(stats.histogram) == 3
        assert stats.mcqs_with_responses == 3
        assert len(stats.histogram) == 20

    def test_insufficient_data(self):
        store = ResponseStore(make_items(3))
        self.fill(store, [("m0", 1, 5, 50)])
        with pytest.raises(InsufficientDataError):
            store.corpus_stats()


class TestPersistence:
    def test_append_only_log_replays(self, tmp_path):
        log = tmp_path / "responses.jsonl"
        store = ResponseStore(make_items(), log_path=log)
        answer_correctly(store, "alice", "m0", liking=70)
        answer_correctly(store, "bob", "m0")
        reloaded = ResponseStore(make_items(), log_path=log)
        assert len(reloaded.records) == 2
        assert reloaded.mcq_stats("m0").responses == 2
        with pytest.raises(DuplicateResponseError):
            reloaded.record_response("alice", "m0", 0)

    def test_record_count_never_decreases(self, tmp_path):
        log = tmp_path / "responses.jsonl"
        store = ResponseStore(make_items(), log_path=log)
        counts = []
        for i, session in enumerate(("a", "b", "c")):
            answer_correctly(store, session, "m0")
            counts.append(len(store.records))
        assert counts == sorted(counts)
        assert len(log.read_text().splitlines()) == 3

    def test_log_lines_are_json_records(self, tmp_path):
        log = tmp_path / "responses.jsonl"
        store = ResponseStore(make_items(), log_path=log)
        answer_correctly(store, "a", "m0", liking=42)
        record = json.loads(log.read_text().splitlines()[0])
        assert record["mcq_id"] == "m0"
        assert record["liking"] == 42
        assert record["session"] == "a"


class TestConcurrency:
    def test_parallel_writers_all_recorded(self, tmp_path):
        import threading

        store = ResponseStore(make_items(1), log_path=tmp_path / "log.jsonl")
        errors = []

        def worker(i: int) -> None:
            try:
                answer_correctly(store, f"session-{i}", "m0")
            except Exception as exc:  # pragma: no cover - failure diagnostics
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(20)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        assert store.mcq_stats("m0").responses == 20
        assert len((tmp_path / "log.jsonl").read_text().splitlines()) == 20

    def test_parallel_duplicates_only_one_wins(self):
        import threading

        store = ResponseStore(make_items(1))
        outcomes = []

        def worker() -> None:
            try:
                answer_correctly(store, "same-session", "m0")
                outcomes.append("ok")
            except DuplicateResponseError:
                outcomes.append("conflict")

        threads = [threading.Thread(target=worker) for _ in range(10)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert outcomes.count("ok") == 1
        assert store.mcq_stats("m0").responses == 1


class TestSimulation:
    def test_simulation_is_deterministic(self, tmp_path):
        log1, log2 = tmp_path / "r1.jsonl", tmp_path / "r2.jsonl"
        s1 = ResponseStore(make_items(3), log_path=log1)
        s2 = ResponseStore(make_items(3), log_path=log2)
        n1 = simulate_responses(s1, n_per_mcq=10, seed=3)
        n2 = simulate_responses(s2, n_per_mcq=10, seed=3)
        assert n1 == n2 == 30
        assert log1.read_bytes() == log2.read_bytes()

    def test_simulation_covers_every_mcq(self):
        store = ResponseStore(make_items(5))
        simulate_responses(store, n_per_mcq=7, seed=1)
        for item in make_items(5):
            assert store.mcq_stats(item.mcq_id).responses == 7
