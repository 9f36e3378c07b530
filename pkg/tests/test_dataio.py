import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from respkit.dataio import (
    AudioClip,
    CycleRecord,
    Label,
    Split,
    extract_cycle,
    fix_duration,
    label_from_flags,
    make_split,
    parse_annotations,
    parse_split_table,
    patient_id_of,
)
from respkit.errors import (
    AnnotationParseError,
    ContractError,
    SplitConfigError,
    SplitIntegrityError,
)

# Realistic annotation excerpt (ICBHI column layout: onset offset crackle wheeze)
SAMPLE_ANNOTATION = """\
0.036\t0.579\t0\t0
0.579\t2.45\t1\t0
2.45\t3.893\t0\t1
3.893\t5.793\t1\t1
5.793\t7.521\t0\t0
"""


class TestParseAnnotations:
    def test_normal_row(self):
        recs = parse_annotations("0.5 2.1 0 0", "r")
        assert len(recs) == 1
        assert recs[0].onset == 0.5 and recs[0].offset == 2.1
        assert recs[0].label is Label.NORMAL

    def test_both_row(self):
        assert parse_annotations("1.0 3.0 1 1", "r")[0].label is Label.BOTH

    def test_record_count_matches_line_count(self):
        recs = parse_annotations(SAMPLE_ANNOTATION, "101_1b1_Al_sc_Meditron")
        assert len(recs) == len(SAMPLE_ANNOTATION.strip().splitlines())
        assert [r.label for r in recs] == [
            Label.NORMAL, Label.CRACKLE, Label.WHEEZE, Label.BOTH, Label.NORMAL,
        ]

    @pytest.mark.parametrize(
        "bad, msg",
        [
            ("0.5 2.1 0", "4 columns"),
            ("0.5 2.1 0 0 9", "4 columns"),
            ("a 2.1 0 0", "non-numeric"),
            ("2.1 0.5 0 0", "offset must exceed onset"),
            ("0.5 0.5 0 0", "offset must exceed onset"),
            ("0.5 2.1 2 0", "flags"),
        ],
    )
    def test_malformed_rows_name_the_line(self, bad, msg):
        with pytest.raises(AnnotationParseError, match="line 2") as exc:
            parse_annotations("0.1 0.2 0 0\n" + bad, "r")
        assert msg in str(exc.value)

    def test_all_flag_combinations_distinct(self):
        labels = {label_from_flags(c, w) for c in (0, 1) for w in (0, 1)}
        assert labels == {Label.NORMAL, Label.CRACKLE, Label.WHEEZE, Label.BOTH}


class TestSplit:
    def test_patient_id_is_first_token(self):
        assert patient_id_of("101_1b1_Al_sc_Meditron") == "101"
        assert patient_id_of("226_1b1_Pl_sc_LittC2SE") == "226"

    def _recs(self, *ids):
        return [CycleRecord(i, 0.0, 1.0, False, False) for i in ids]

    def test_single_side_patient_ok(self):
        recs = self._recs("101_a", "101_b")
        split = make_split(recs, {"101_a": Split.TRAIN, "101_b": Split.TRAIN})
        assert split.ids(Split.TRAIN) == ["101_a", "101_b"]

    def test_patient_on_both_sides_rejected(self):
        recs = self._recs("101_a", "101_b")
        with pytest.raises(SplitIntegrityError):
            make_split(recs, {"101_a": Split.TRAIN, "101_b": Split.TEST})

    def test_missing_recording_rejected(self):
        with pytest.raises(SplitConfigError):
            make_split(self._recs("101_a"), {})

    def test_parse_split_table(self):
        table = parse_split_table("101_a train\n103_b\ttest\n")
        assert table == {"101_a": Split.TRAIN, "103_b": Split.TEST}

    @settings(max_examples=200, deadline=None)
    @given(
        st.dictionaries(
            st.tuples(
                st.integers(100, 105),
                st.integers(0, 9),
                st.booleans(),
            ).map(lambda t: f"{t[0]}_{t[1]}b1_x"),
            st.sampled_from([Split.TRAIN, Split.TEST]),
            min_size=1,
            max_size=12,
        )
    )
    def test_fuzzed_tables_never_leak_patients(self, table):
        recs = [CycleRecord(r, 0.0, 1.0, False, False) for r in table]
        patients = {}
        leaky = False
        for rec_id, side in table.items():
            pid = patient_id_of(rec_id)
            if pid in patients and patients[pid] is not side:
                leaky = True
            patients[pid] = side
        if leaky:
            with pytest.raises(SplitIntegrityError):
                make_split(recs, table)
        else:
            split = make_split(recs, table)
            train_p = {patient_id_of(r) for r in split.ids(Split.TRAIN)}
            test_p = {patient_id_of(r) for r in split.ids(Split.TEST)}
            assert not (train_p & test_p)


class TestExtractCycle:
    def test_full_span_identity(self):
        clip = AudioClip(np.arange(10000, dtype=np.float32), 1000)
        rec = CycleRecord("r", 0.0, 10.0, False, False)
        out = extract_cycle(clip, rec)
        assert np.array_equal(out.samples, clip.samples)

    def test_partial_span_sample_count(self):
        clip = AudioClip(np.zeros(10000, dtype=np.float32), 1000)
        out = extract_cycle(clip, CycleRecord("r", 2.0, 4.5, False, False))
        assert len(out.samples) == 2500

    def test_offset_slack_is_clamped(self):
        clip = AudioClip(np.zeros(10000, dtype=np.float32), 1000)
        out = extract_cycle(clip, CycleRecord("r", 9.9, 10.03, False, False))
        assert len(out.samples) == 100  # clamped to the recording end

    def test_offset_beyond_slack_rejected(self):
        clip = AudioClip(np.zeros(10000, dtype=np.float32), 1000)
        with pytest.raises(ContractError):
            extract_cycle(clip, CycleRecord("r", 9.0, 10.5, False, False))

    def test_onset_beyond_end_rejected(self):
        clip = AudioClip(np.zeros(10000, dtype=np.float32), 1000)
        with pytest.raises(ContractError):
            extract_cycle(clip, CycleRecord("r", 10.5, 11.0, False, False))


class TestFixDuration:
    def test_exact_clip_unchanged(self):
        clip = AudioClip(np.random.randn(10000).astype(np.float32), 1000)
        assert np.array_equal(fix_duration(clip).samples, clip.samples)

    def test_short_clip_tiled_from_start(self):
        clip = AudioClip(np.arange(4000, dtype=np.float32), 1000)
        out = fix_duration(clip)
        assert len(out.samples) == 10000
        expected = np.concatenate([clip.samples] * 2 + [clip.samples[:2000]])
        assert np.array_equal(out.samples, expected)

    def test_long_clip_truncated(self):
        clip = AudioClip(np.arange(25000, dtype=np.float32), 1000)
        out = fix_duration(clip)
        assert np.array_equal(out.samples, clip.samples[:10000])

    def test_empty_clip_rejected(self):
        with pytest.raises(ContractError):
            fix_duration(AudioClip(np.zeros(0, dtype=np.float32), 1000))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 30000), st.sampled_from([1000, 4000, 8000]))
    def test_idempotent_and_exact_length(self, n, rate):
        clip = AudioClip(np.random.randn(n).astype(np.float32), rate)
        once = fix_duration(clip)
        twice = fix_duration(once)
        assert len(once.samples) == round(10.0 * rate)
        assert np.array_equal(once.samples, twice.samples)
