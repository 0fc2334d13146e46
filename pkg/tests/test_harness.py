import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecagg import instances
from vecagg.gf import FieldSpec
from vecagg.harness import (
    HEADER_SIZE,
    Channel,
    Frame,
    FrameError,
    IsolationError,
    Kind,
    User,
    parse_frame,
    parse_frames,
    run_many,
    run_round,
    serialize_frame,
)
from vecagg.linalg import MatrixGF
from vecagg.scheme import construct

F7 = FieldSpec(7)


class TestFrames:
    def test_one_element_frame(self):
        b = serialize_frame(Frame(0, 3, Kind.MESSAGE, (5,)))
        assert len(b) == 15 and HEADER_SIZE == 11
        assert b == struct.pack("<IHBII", 0, 3, 1, 1, 5)
        assert parse_frame(b, 7) == (Frame(0, 3, Kind.MESSAGE, (5,)), 15)

    def test_empty_payload(self):
        b = serialize_frame(Frame(9, 0, Kind.KEY))
        assert len(b) == HEADER_SIZE
        assert parse_frame(b)[0].count == 0

    def test_randomized_round_trip(self):
        rng = np.random.default_rng(1)
        frames = []
        for _ in range(1000):
            q = int(rng.choice([2, 7, 2147483647]))
            n = int(rng.integers(0, 8))
            fr = Frame(
                int(rng.integers(0, 2**32)),
                int(rng.integers(0, 2**16)),
                Kind(int(rng.integers(0, 3))),
                tuple(int(v) for v in rng.integers(0, q, size=n)),
            )
            b = serialize_frame(fr)
            assert len(b) == HEADER_SIZE + 4 * n
            assert parse_frame(b, q) == (fr, len(b))
            frames.append(fr)
        stream = b"".join(serialize_frame(f) for f in frames)
        assert parse_frames(stream) == frames

    @settings(max_examples=200, deadline=None)
    @given(
        st.integers(0, 2**32 - 1),
        st.integers(0, 2**16 - 1),
        st.sampled_from(list(Kind)),
        st.lists(st.integers(0, 2**32 - 1), max_size=10),
    )
    def test_round_trip_property(self, rnd, sender, kind, payload):
        fr = Frame(rnd, sender, kind, tuple(payload))
        assert parse_frame(serialize_frame(fr)) == (fr, HEADER_SIZE + 4 * len(payload))

    def test_bad_kind(self):
        b = bytearray(serialize_frame(Frame(0, 1, Kind.MESSAGE, (1,))))
        b[6] = 9
        with pytest.raises(FrameError) as e:
            parse_frame(bytes(b))
        assert e.value.offset == 6 and "kind 9" in str(e.value)

    def test_truncated_header(self):
        with pytest.raises(FrameError) as e:
            parse_frame(b"\x00" * 5)
        assert e.value.offset == 0

    def test_truncated_payload(self):
        b = serialize_frame(Frame(0, 1, Kind.MESSAGE, (1, 2)))[:-1]
        with pytest.raises(FrameError) as e:
            parse_frame(b)
        assert e.value.offset == HEADER_SIZE

    def test_element_out_of_field(self):
        b = serialize_frame(Frame(0, 1, Kind.MESSAGE, (3, 7)))
        with pytest.raises(FrameError) as e:
            parse_frame(b, q=7)
        assert e.value.offset == HEADER_SIZE + 4

    def test_error_offset_in_stream(self):
        good = serialize_frame(Frame(0, 1, Kind.MESSAGE, (1,)))
        with pytest.raises(FrameError) as e:
            parse_frames(good + good[:4])
        assert e.value.offset == len(good)


class TestIsolation:
    def test_channel_owner(self):
        ch = Channel(1, 6)
        with pytest.raises(IsolationError):
            ch.send(Frame(0, 2, Kind.MESSAGE, (0,)))

    def test_user_rejects_foreign_frames(self, ex1):
        u = User(ex1, 0, MatrixGF(F7, [[1]]))
        with pytest.raises(IsolationError):
            u.receive_key(Frame(0, 2, Kind.KEY, (1,)))

    def test_user_extra_state(self, ex1):
        u = User(ex1, 0, MatrixGF(F7, [[1]]))
        u.assert_isolated()
        u.peer_input = 3
        with pytest.raises(IsolationError, match="peer_input"):
            u.assert_isolated()


class TestRound:
    def test_example2(self, ex2):
        W = MatrixGF(F7, [[1], [2], [3], [4], [5], [6]])
        log = run_round(ex2, W, seed=11)
        assert log.correct
        assert log.decoded == ex2.spec.F @ W
        kinds = [f.kind for f in log.frames]
        assert kinds == [Kind.KEY] * 6 + [Kind.MESSAGE] * 6 + [Kind.RESULT]
        assert log.message_symbols() == 6
        assert "decoded=" in log.text()

    def test_zero_input(self, ex2):
        log = run_round(ex2, MatrixGF.zeros(F7, 6, 1), seed=4)
        assert log.decoded.is_zero() and log.correct

    def test_messages_are_masked_inputs(self, ex1):
        W = MatrixGF(F7, [[0], [1], [2], [3], [4]])
        log = run_round(ex1, W, seed=2)
        keys = ex1.keygen(2)
        msgs = [f for f in log.frames if f.kind == Kind.MESSAGE]
        for k, fr in enumerate(msgs):
            assert fr.sender == k + 1
            assert list(fr.payload) == (W.take_rows([k]) + keys.per_user[k]).entries

    def test_deterministic(self, ex1):
        W = MatrixGF(F7, [[6], [5], [4], [3], [2]])
        assert run_round(ex1, W, 99).frame_bytes() == run_round(ex1, W, 99).frame_bytes()
        assert run_round(ex1, W, 99).frame_bytes() != run_round(ex1, W, 98).frame_bytes()

    def test_wrong_shape(self, ex1):
        with pytest.raises(ValueError):
            run_round(ex1, MatrixGF.zeros(F7, 4, 1), 0)


class TestRunMany:
    def test_example1_thousand(self, ex1):
        s = run_many(ex1, 1000, seed=3)
        assert s.passed == 1000 and s.message_symbols == 5000
        assert s.text() == "rounds=1000 correct=1000/1000 message_symbols=5000 seed=3"

    def test_secure_sum(self):
        s = run_many(construct(instances.secure_sum(4, q=5)), 100, seed=0)
        assert s.passed == 100 and s.message_symbols == 400

    def test_vector_inputs(self):
        s = run_many(construct(instances.example2(L=2)), 50, seed=1)
        assert s.passed == 50 and s.message_symbols == 600

    def test_single_round_matches_run_round(self, ex1):
        s = run_many(ex1, 1, seed=8, keep_logs=True)
        rng = np.random.default_rng(8)
        W = MatrixGF(F7, rng.integers(0, 7, size=(5, 1)))
        key_seed = int(rng.integers(0, 2**63 - 1))
        assert s.logs[0].frame_bytes() == run_round(ex1, W, key_seed).frame_bytes()

    def test_deterministic(self, ex2):
        a = run_many(ex2, 20, seed=5, keep_logs=True)
        b = run_many(ex2, 20, seed=5, keep_logs=True)
        assert [l.frame_bytes() for l in a.logs] == [l.frame_bytes() for l in b.logs]

    def test_bad_rounds(self, ex1):
        with pytest.raises(ValueError):
            run_many(ex1, 0)
