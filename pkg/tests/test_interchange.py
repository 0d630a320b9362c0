import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sevarb.core import ProbeDimension, ProbTriple, Sample, SeverityLabel, ValidationError
from sevarb.interchange import (
    Manifest,
    PromptSet,
    read_captions,
    read_embeddings,
    read_manifest,
    read_predictions,
    read_prompt_set,
    validate_caption_record,
    write_embeddings,
    write_manifest,
    write_predictions,
    write_prompt_set,
)

# Frozen SHA-256 of fixture files built from fixed data; guards byte-level
# stability of every writer across platforms and releases.
GOLDEN_BLOB_SHA = "5477922398863cee7a7d58e791dba47a06b97fc381553c506ad7fdf9522b517c"
GOLDEN_MANIFEST_SHA = "3b69167d71e4597324fd24e137e87bdb492abde217d8bb71681e58afcdb487b2"
GOLDEN_PREDICTIONS_SHA = "5defcec7d451c38a9f36d0ec6f889bc42b63f2d5f747295c532771d550d5ec64"
GOLDEN_PROMPTS_SHA = "dd0aad258c94ea0a19e6cf9075dac552b271e73983b9b5f80f65304c19a80101"


def make_manifest(labels, prefix="s"):
    samples = [
        Sample(
            id=f"{prefix}{i:04d}",
            lat=29.0 + 0.001 * i,
            lon=-83.0 - 0.001 * i,
            label=SeverityLabel(lbl),
            row=i,
        )
        for i, lbl in enumerate(labels)
    ]
    return Manifest(samples)


class TestEmbeddingBlob:
    def test_1x1_layout(self, tmp_path):
        p = tmp_path / "one.darb"
        write_embeddings(np.array([[0.0]]), p)
        blob = p.read_bytes()
        # 4 magic + 4 version + 8 rows + 8 cols + 4 payload
        assert len(blob) == 28
        assert blob[:4] == b"DARB"
        assert blob[-4:] == b"\x00\x00\x00\x00"

    def test_round_trip_bit_identical_at_scale(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((2556, 512)).astype(np.float32)
        p1, p2 = tmp_path / "a.darb", tmp_path / "b.darb"
        write_embeddings(m, p1)
        back = read_embeddings(p1)
        assert back.dtype == np.float32
        assert np.array_equal(back, m)
        write_embeddings(back, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "bad.darb"
        header = struct.pack("<4sIQQ", b"DARB", 1, 2, 1)
        p.write_bytes(header + struct.pack("<f", 1.0))  # promises 2 rows, holds 1
        with pytest.raises(ValidationError, match="truncated"):
            read_embeddings(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.darb"
        p.write_bytes(b"NOPE" + b"\x00" * 24)
        with pytest.raises(ValidationError, match="magic"):
            read_embeddings(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "bad.darb"
        p.write_bytes(struct.pack("<4sIQQ", b"DARB", 9, 0, 0))
        with pytest.raises(ValidationError, match="version"):
            read_embeddings(p)

    def test_nan_payload_rejected(self, tmp_path):
        p = tmp_path / "nan.darb"
        header = struct.pack("<4sIQQ", b"DARB", 1, 1, 1)
        p.write_bytes(header + struct.pack("<f", float("nan")))
        with pytest.raises(ValidationError, match="non-finite"):
            read_embeddings(p)

    def test_write_rejects_non_finite(self, tmp_path):
        with pytest.raises(ValidationError):
            write_embeddings(np.array([[np.inf]]), tmp_path / "x.darb")

    @settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(
        arrays(
            np.float32,
            st.tuples(st.integers(1, 8), st.integers(1, 8)),
            elements=st.floats(-1e6, 1e6, width=32),
        )
    )
    def test_round_trip_property(self, tmp_path, m):
        p = tmp_path / "prop.darb"
        write_embeddings(m, p)
        assert np.array_equal(read_embeddings(p), m)


class TestManifest:
    def test_three_line_counts(self, tmp_path):
        p = tmp_path / "m.jsonl"
        lines = [
            {"id": "a", "lat": 1.0, "lon": 2.0, "label": "mild"},
            {"id": "b", "lat": 1.0, "lon": 2.0, "label": "moderate"},
            {"id": "c", "lat": 1.0, "lon": 2.0, "label": "severe"},
        ]
        p.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
        man = read_manifest(p)
        assert man.class_counts == (1, 1, 1)
        assert [s.row for s in man.samples] == [0, 1, 2]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("")
        with pytest.raises(ValidationError, match="empty manifest"):
            read_manifest(p)

    def test_malformed_line_names_line_number(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('{"id": "a", "lat": 1.0, "lon": 2.0, "label": "mild"}\n{oops\n')
        with pytest.raises(ValidationError, match=":2:"):
            read_manifest(p)

    def test_duplicate_id_named(self, tmp_path):
        p = tmp_path / "m.jsonl"
        rec = {"id": "dup", "lat": 1.0, "lon": 2.0, "label": "mild"}
        p.write_text(json.dumps(rec) + "\n" + json.dumps(rec) + "\n")
        with pytest.raises(ValidationError, match="dup"):
            read_manifest(p)

    def test_out_of_range_coordinates(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text(json.dumps({"id": "a", "lat": 95.0, "lon": 0.0, "label": "mild"}) + "\n")
        with pytest.raises(ValidationError, match="latitude"):
            read_manifest(p)

    def test_reference_scale_counts(self, tmp_path):
        labels = [0] * 658 + [1] * 1196 + [2] * 702
        man = make_manifest(labels)
        p = tmp_path / "big.jsonl"
        write_manifest(man, p)
        back = read_manifest(p)
        assert back.class_counts == (658, 1196, 702)
        assert len(back) == 2556

    def test_round_trip_values_and_bytes(self, tmp_path):
        man = make_manifest([0, 1, 2, 1])
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_manifest(man, p1)
        back = read_manifest(p1)
        assert back.samples == man.samples
        write_manifest(back, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestPredictions:
    def setup_method(self):
        self.man = make_manifest([0, 1, 2])

    def _write(self, tmp_path, rows):
        p = tmp_path / "pred.jsonl"
        p.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return p

    def test_accepted_verbatim(self, tmp_path):
        p = self._write(
            tmp_path,
            [{"id": "s0000", "model": "a", "p_mild": 0.2, "p_moderate": 0.3, "p_severe": 0.5}],
        )
        ps = read_predictions(p, self.man)
        assert ps.by_model["a"]["s0000"].as_tuple() == pytest.approx((0.2, 0.3, 0.5))

    def test_renormalized_within_tolerance(self, tmp_path):
        p = self._write(
            tmp_path,
            [{"id": "s0000", "model": "a", "p_mild": 0.2, "p_moderate": 0.3, "p_severe": 0.500002}],
        )
        ps = read_predictions(p, self.man)
        assert sum(ps.by_model["a"]["s0000"].as_tuple()) == pytest.approx(1.0, abs=1e-12)

    def test_sum_error_names_value(self, tmp_path):
        p = self._write(
            tmp_path,
            [{"id": "s0000", "model": "a", "p_mild": 0.2, "p_moderate": 0.3, "p_severe": 0.6}],
        )
        with pytest.raises(ValidationError, match="probability sum 1.1"):
            read_predictions(p, self.man)

    def test_unknown_id(self, tmp_path):
        p = self._write(
            tmp_path,
            [{"id": "ghost", "model": "a", "p_mild": 0.2, "p_moderate": 0.3, "p_severe": 0.5}],
        )
        with pytest.raises(ValidationError, match="unknown id"):
            read_predictions(p, self.man)

    def test_duplicate_id_model_pair(self, tmp_path):
        row = {"id": "s0000", "model": "a", "p_mild": 0.2, "p_moderate": 0.3, "p_severe": 0.5}
        p = self._write(tmp_path, [row, row])
        with pytest.raises(ValidationError, match="duplicate prediction"):
            read_predictions(p, self.man)

    def test_coverage_report(self, tmp_path):
        p = self._write(
            tmp_path,
            [{"id": "s0001", "model": "a", "p_mild": 0.2, "p_moderate": 0.3, "p_severe": 0.5}],
        )
        ps = read_predictions(p, self.man)
        assert ps.missing["a"] == ["s0000", "s0002"]

    def test_line_order_never_matters(self, tmp_path):
        rows = [
            {"id": sid, "model": "a", "p_mild": pm, "p_moderate": po, "p_severe": ps}
            for sid, pm, po, ps in [
                ("s0000", 0.5, 0.3, 0.2),
                ("s0001", 0.1, 0.8, 0.1),
                ("s0002", 0.2, 0.2, 0.6),
            ]
        ]
        p1 = self._write(tmp_path, rows)
        fwd = read_predictions(p1, self.man)
        p2 = tmp_path / "rev.jsonl"
        p2.write_text("\n".join(json.dumps(r) for r in reversed(rows)) + "\n")
        rev = read_predictions(p2, self.man)
        assert np.array_equal(fwd.matrix("a", self.man), rev.matrix("a", self.man))

    def test_write_read_round_trip(self, tmp_path):
        recs = [
            ("s0000", "m", ProbTriple.from_values(0.25, 0.25, 0.5)),
            ("s0001", "m", ProbTriple.from_values(0.125, 0.75, 0.125)),
        ]
        p = tmp_path / "rt.jsonl"
        write_predictions(recs, p)
        back = read_predictions(p, self.man)
        for sid, _, probs in recs:
            assert back.by_model["m"][sid] == probs


class TestBinding:
    def test_row_count_must_match_manifest(self):
        from sevarb.interchange import bind_embeddings

        man = make_manifest([0, 1, 2])
        bind_embeddings(man, np.zeros((3, 4)))  # fine
        with pytest.raises(ValidationError, match="manifest has 3"):
            bind_embeddings(man, np.zeros((4, 4)))


class TestPromptSets:
    def test_round_trip(self, tmp_path):
        ps = PromptSet(ProbeDimension.TREES, ["a fallen tree", "snapped branches"])
        p = tmp_path / "prompts_trees.json"
        write_prompt_set(ps, p)
        back = read_prompt_set(p)
        assert back.dimension is ProbeDimension.TREES
        assert back.prompts == ps.prompts

    def test_empty_prompts_rejected(self):
        with pytest.raises(ValidationError):
            PromptSet(ProbeDimension.TREES, [])

    def test_embedding_alignment_enforced(self):
        with pytest.raises(ValidationError):
            PromptSet(ProbeDimension.FLOOD, ["a", "b"], embeddings=np.zeros((3, 4)))


class TestCaptions:
    def test_fifty_words_clean(self):
        rec = {"id": "a", "description": " ".join(["word"] * 50)}
        assert validate_caption_record(rec) == []

    def test_empty_description(self):
        assert "empty description" in validate_caption_record({"id": "a", "description": ""})[0]

    def test_length_out_of_band(self):
        rec = {"id": "a", "description": " ".join(["word"] * 300)}
        warnings = validate_caption_record(rec)
        assert len(warnings) == 1 and "length 300 outside 10-120" in warnings[0]

    def test_missing_field_raises(self):
        with pytest.raises(ValidationError, match="description"):
            validate_caption_record({"id": "a"})

    def test_read_captions_aggregates(self, tmp_path):
        p = tmp_path / "captions.jsonl"
        p.write_text(
            json.dumps({"id": "a", "description": " ".join(["w"] * 50)})
            + "\n"
            + json.dumps({"id": "b", "description": ""})
            + "\n"
        )
        records, warnings = read_captions(p)
        assert len(records) == 2
        assert len(warnings) == 1


class TestGoldenFixtures:
    """Byte-stability: writers must produce these exact bytes forever."""

    def test_blob_hash(self, tmp_path):
        m = (np.arange(12, dtype=np.float64).reshape(3, 4) - 5.5) / 3.0
        p = tmp_path / "g.darb"
        write_embeddings(m, p)
        assert hashlib.sha256(p.read_bytes()).hexdigest() == GOLDEN_BLOB_SHA

    def test_manifest_hash(self, tmp_path):
        man = Manifest(
            [
                Sample(
                    id="sv-001",
                    lat=29.4321,
                    lon=-83.2891,
                    label=SeverityLabel.MILD,
                    caption_human="light debris near the road",
                    row=0,
                ),
                Sample(
                    id="sv-002",
                    lat=29.44,
                    lon=-83.29,
                    label=SeverityLabel.MODERATE,
                    caption_llm="a fallen tree blocks the street",
                    row=1,
                ),
                Sample(id="sv-003", lat=29.45, lon=-83.30, label=SeverityLabel.SEVERE, row=2),
            ]
        )
        p = tmp_path / "g.jsonl"
        write_manifest(man, p)
        assert hashlib.sha256(p.read_bytes()).hexdigest() == GOLDEN_MANIFEST_SHA

    def test_predictions_hash(self, tmp_path):
        p = tmp_path / "g_pred.jsonl"
        write_predictions(
            [
                ("sv-001", "model_a", ProbTriple.from_values(0.7, 0.2, 0.1)),
                ("sv-002", "model_a", ProbTriple.from_values(0.1, 0.6, 0.3)),
                ("sv-003", "model_a", ProbTriple.from_values(0.05, 0.15, 0.8)),
            ],
            p,
        )
        assert hashlib.sha256(p.read_bytes()).hexdigest() == GOLDEN_PREDICTIONS_SHA

    def test_prompts_hash(self, tmp_path):
        ps = PromptSet(ProbeDimension.FLOOD, ["a flooded road", "standing water on a street"])
        p = tmp_path / "g_prompts.json"
        write_prompt_set(ps, p)
        assert hashlib.sha256(p.read_bytes()).hexdigest() == GOLDEN_PROMPTS_SHA
