"""Model, plan, store, and aggregation tests for the rating experiment."""
import numpy as np
import pytest

from lgetools.errors import UndefinedStatisticError, ValidationError
from lgetools.metrics import Contingency
from lgetools.rating import (
    CONSENSUS_RATER,
    CaseEntry,
    ComparisonChoice,
    Method,
    RatingCategory,
    RatingEvent,
    SessionData,
    TargetClass,
    aggregate_proportions,
    assign_case,
    comparison_eligible,
    export_session_csvs,
    import_session_csvs,
    make_plan,
    patient_contingency_from_ratings,
    preference_summary,
    rater_agreement,
)
from lgetools.rating.store import latest_by_key

SCAR = TargetClass.SCAR
MVO = TargetClass.MVO


# -- builders -------------------------------------------------------------------


class DataBuilder:
    def __init__(self, n_cases=4, raters=("r1", "r2"), overlap=(), seed=17, nz=1):
        self.case_ids = [f"p{i:03d}" for i in range(n_cases)]
        self.raters = tuple(raters)
        self.overlap = frozenset(overlap)
        self.seed = seed
        self.nz = {pid: nz for pid in self.case_ids}
        self.assignments = {pid: assign_case(seed, pid) for pid in self.case_ids}
        self.ratings = []
        self.comparisons = []
        self._seq = 0

    def arm_of(self, pid, method):
        return self.assignments[pid].arm_of(method)

    def rate(self, rater, pid, sl, cls, arm, category):
        self._seq += 1
        self.ratings.append(
            RatingEvent(
                seq=self._seq,
                timestamp=f"t{self._seq}",
                session_id="s",
                rater_id=rater,
                patient_id=pid,
                slice_index=sl,
                target_class=cls,
                arm=arm,
                payload=category.value,
            )
        )

    def rate_method(self, rater, pid, sl, cls, method, category):
        self.rate(rater, pid, sl, cls, self.arm_of(pid, method), category)

    def compare(self, rater, pid, sl, cls, choice):
        self._seq += 1
        self.comparisons.append(
            RatingEvent(
                seq=self._seq,
                timestamp=f"t{self._seq}",
                session_id="s",
                rater_id=rater,
                patient_id=pid,
                slice_index=sl,
                target_class=cls,
                arm=None,
                payload=choice.value,
            )
        )

    def build(self):
        return SessionData(
            session_id="s",
            raters=self.raters,
            case_order=tuple(self.case_ids),
            n_slices=dict(self.nz),
            overlap=self.overlap,
            assignments=dict(self.assignments),
            rating_events=tuple(self.ratings),
            comparison_events=tuple(self.comparisons),
            seed=self.seed,
        )


# -- assignment & plan --------------------------------------------------------------


def test_assignment_deterministic_and_balanced():
    a1 = assign_case(5, "patient-1")
    a2 = assign_case(5, "patient-1")
    assert a1 == a2
    assert a1.method_of_a != a1.method_of_b
    methods = [assign_case(5, f"p{i}").method_of_a for i in range(400)]
    n_manual = sum(1 for m in methods if m == Method.MANUAL)
    assert 140 < n_manual < 260  # roughly balanced coin


def test_assignment_changes_with_seed():
    flips = sum(
        assign_case(1, f"p{i}").method_of_a != assign_case(2, f"p{i}").method_of_a
        for i in range(200)
    )
    assert flips > 50


def cases(n):
    return [CaseEntry(f"p{i:03d}", f"/m/{i}", f"/a/{i}") for i in range(n)]


def test_plan_split_152_cases_overlap_20():
    plan = make_plan(cases(152), ("r1", "r2"), 20, 7, {f"p{i:03d}": 2 for i in range(152)})
    assert len(plan.overlap) == 20
    assert len(plan.partition["r1"]) == 66
    assert len(plan.partition["r2"]) == 66
    all_ids = set(plan.overlap) | set(plan.partition["r1"]) | set(plan.partition["r2"])
    assert len(all_ids) == 152
    assert set(plan.partition["r1"]).isdisjoint(plan.partition["r2"])


def test_plan_full_overlap():
    plan = make_plan(cases(20), ("r1", "r2"), 20, 7, {f"p{i:03d}": 1 for i in range(20)})
    assert len(plan.overlap) == 20
    assert plan.partition == {"r1": (), "r2": ()}
    assert plan.patients_of("r1") == plan.patients_of("r2")


def test_plan_deterministic():
    n_slices = {f"p{i:03d}": 3 for i in range(30)}
    p1 = make_plan(cases(30), ("r1", "r2"), 10, 99, n_slices, session_id="fixed")
    p2 = make_plan(cases(30), ("r1", "r2"), 10, 99, n_slices, session_id="fixed")
    assert p1 == p2


def test_plan_rejects_duplicates():
    rows = cases(3) + [CaseEntry("p000", "/m/x", "/a/x")]
    with pytest.raises(ValidationError, match="duplicate"):
        make_plan(rows, ("r1",), 0, 1, {"p000": 1, "p001": 1, "p002": 1})


def test_plan_task_order_patient_then_slice():
    plan = make_plan(cases(3), ("r1",), 0, 3, {"p000": 2, "p001": 1, "p002": 2})
    assert plan.tasks_of("r1") == [("p000", 0), ("p000", 1), ("p001", 0), ("p002", 0), ("p002", 1)]


def test_plan_unknown_rater():
    plan = make_plan(cases(2), ("r1",), 0, 3, {"p000": 1, "p001": 1})
    with pytest.raises(ValidationError):
        plan.tasks_of("intruder")


# -- eligibility ----------------------------------------------------------------


def test_comparison_eligibility_rules():
    tn = RatingCategory.TRUE_NEGATIVE
    assert not comparison_eligible(tn, tn)
    assert comparison_eligible(tn, RatingCategory.FALSE_POSITIVE)
    assert comparison_eligible(RatingCategory.OPTIMAL, RatingCategory.OPTIMAL)
    assert comparison_eligible(RatingCategory.FALSE_POSITIVE, tn)  # symmetric
    with pytest.raises(ValidationError):
        comparison_eligible(None, tn)


# -- supersession ------------------------------------------------------------------


def test_latest_by_key_supersedes():
    b = DataBuilder(n_cases=1, raters=("r1",))
    b.rate("r1", "p000", 0, SCAR, "A", RatingCategory.TOO_BIG)
    b.rate("r1", "p000", 0, SCAR, "A", RatingCategory.OPTIMAL)  # revision
    data = b.build()
    latest = latest_by_key(data.rating_events)
    assert len(latest) == 1
    (event,) = latest.values()
    assert event.category == RatingCategory.OPTIMAL
    assert event.seq == 2


# -- aggregate_proportions -----------------------------------------------------------


def test_aggregate_all_optimal_is_all_true_positive():
    b = DataBuilder(n_cases=3, raters=("r1",))
    for pid in b.case_ids:
        for arm in ("A", "B"):
            b.rate("r1", pid, 0, SCAR, arm, RatingCategory.OPTIMAL)
    props = aggregate_proportions(b.build(), SCAR)
    for method in ("manual", "automatic"):
        assert props[method].n == 3
        assert props[method].coarse_fractions["true_positive"] == 1.0


def test_aggregate_constructed_2_6_percent_false_negative():
    b = DataBuilder(n_cases=50, raters=("r1",), nz=20)  # 1000 automatic-arm ratings
    count = 0
    for pid in b.case_ids:
        for sl in range(20):
            category = RatingCategory.FALSE_NEGATIVE if count < 26 else RatingCategory.OPTIMAL
            count += 1
            b.rate_method("r1", pid, sl, SCAR, Method.AUTOMATIC, category)
    props = aggregate_proportions(b.build(), SCAR)
    auto = props["automatic"]
    assert auto.n == 1000
    assert auto.detailed_fractions["false_negative"] == pytest.approx(0.026)
    assert auto.coarse_fractions["false_negative"] == pytest.approx(0.026)
    assert props["manual"].n == 0


def test_aggregate_empty_session_has_zero_counts():
    props = aggregate_proportions(DataBuilder(n_cases=2).build(), SCAR)
    for method in ("manual", "automatic"):
        assert props[method].n == 0
        assert all(v == 0 for v in props[method].detailed_counts.values())


def test_aggregate_wrong_organ_maps_to_false_positive():
    b = DataBuilder(n_cases=1, raters=("r1",))
    b.rate("r1", "p000", 0, SCAR, "A", RatingCategory.WRONG_ORGAN)
    method_of_a = b.assignments["p000"].method_of_a.value
    props = aggregate_proportions(b.build(), SCAR)
    assert props[method_of_a].coarse_counts["false_positive"] == 1


def test_aggregate_consensus_overrides_both_raters():
    b = DataBuilder(n_cases=1, raters=("r1", "r2"), overlap=("p000",))
    b.rate("r1", "p000", 0, SCAR, "A", RatingCategory.TOO_BIG)
    b.rate("r2", "p000", 0, SCAR, "A", RatingCategory.OPTIMAL)
    b.rate(CONSENSUS_RATER, "p000", 0, SCAR, "A", RatingCategory.TOO_SMALL)
    method_of_a = b.assignments["p000"].method_of_a.value
    props = aggregate_proportions(b.build(), SCAR)
    assert props[method_of_a].n == 1
    assert props[method_of_a].detailed_counts["too_small"] == 1


# -- preference_summary ---------------------------------------------------------------


def rate_both_arms(b, rater, pid, sl, cls, cat=RatingCategory.OPTIMAL):
    b.rate(rater, pid, sl, cls, "A", cat)
    b.rate(rater, pid, sl, cls, "B", cat)


def test_preference_all_equal():
    b = DataBuilder(n_cases=2, raters=("r1",))
    for pid in b.case_ids:
        rate_both_arms(b, "r1", pid, 0, SCAR)
        b.compare("r1", pid, 0, SCAR, ComparisonChoice.EQUAL)
    summary = preference_summary(b.build(), SCAR)
    assert (summary.n_automatic, summary.n_manual, summary.n_equal) == (0, 0, 2)
    assert summary.chi2_p is None


def test_preference_single_choice_unblinds_correctly():
    b = DataBuilder(n_cases=1, raters=("r1",))
    rate_both_arms(b, "r1", "p000", 0, SCAR)
    b.compare("r1", "p000", 0, SCAR, ComparisonChoice.A)
    summary = preference_summary(b.build(), SCAR)
    if b.assignments["p000"].method_of_a == Method.AUTOMATIC:
        assert (summary.n_automatic, summary.n_manual) == (1, 0)
    else:
        assert (summary.n_automatic, summary.n_manual) == (0, 1)


def test_preference_constructed_fractions_and_p():
    b = DataBuilder(n_cases=11, raters=("r1",), nz=91)  # 1001 comparison slots
    verdicts = ["auto"] * 335 + ["human"] * 251 + ["equal"] * 415
    i = 0
    for pid in b.case_ids:
        for sl in range(91):
            if i >= len(verdicts):
                break
            rate_both_arms(b, "r1", pid, sl, SCAR)
            v = verdicts[i]
            i += 1
            if v == "equal":
                b.compare("r1", pid, sl, SCAR, ComparisonChoice.EQUAL)
            else:
                method = Method.AUTOMATIC if v == "auto" else Method.MANUAL
                arm = b.arm_of(pid, method)
                b.compare("r1", pid, sl, SCAR, ComparisonChoice(arm))
    summary = preference_summary(b.build(), SCAR)
    assert (summary.n_automatic, summary.n_manual, summary.n_equal) == (335, 251, 415)
    assert summary.frac_automatic == pytest.approx(0.335, abs=0.001)
    assert summary.frac_manual == pytest.approx(0.251, abs=0.001)
    assert summary.frac_equal == pytest.approx(0.415, abs=0.001)
    assert summary.chi2_p < 0.001


def test_preference_skips_ineligible_comparison():
    b = DataBuilder(n_cases=1, raters=("r1",))
    rate_both_arms(b, "r1", "p000", 0, SCAR, RatingCategory.TRUE_NEGATIVE)
    b.compare("r1", "p000", 0, SCAR, ComparisonChoice.A)  # should be ignored
    summary = preference_summary(b.build(), SCAR)
    assert (summary.n_automatic, summary.n_manual, summary.n_equal) == (0, 0, 0)


# -- rater_agreement ----------------------------------------------------------------


def overlap_builder(n_cases=4, nz=3):
    return DataBuilder(
        n_cases=n_cases,
        raters=("r1", "r2"),
        overlap=tuple(f"p{i:03d}" for i in range(n_cases)),
        nz=nz,
    )


def test_agreement_identical_ratings_kappa_one():
    b = overlap_builder()
    cats = list(RatingCategory)
    i = 0
    for pid in b.case_ids:
        for sl in range(3):
            for arm in ("A", "B"):
                cat = cats[i % len(cats)]
                i += 1
                b.rate("r1", pid, sl, SCAR, arm, cat)
                b.rate("r2", pid, sl, SCAR, arm, cat)
    result = rater_agreement(b.build(), SCAR, "categories")
    assert result.kappa == 1.0
    assert result.n == 4 * 3 * 2


def test_agreement_known_matrix_kappa():
    # two categories used, arranged for p_o=0.7, p_e=0.5 -> kappa 0.4
    b = overlap_builder(n_cases=10, nz=5)
    pattern = (
        [("optimal", "optimal")] * 20
        + [("optimal", "too_big")] * 5
        + [("too_big", "optimal")] * 10
        + [("too_big", "too_big")] * 15
    )
    slots = [(pid, sl) for pid in b.case_ids for sl in range(5)]
    for (pid, sl), (c1, c2) in zip(slots, pattern):
        b.rate("r1", pid, sl, MVO, "A", RatingCategory(c1))
        b.rate("r2", pid, sl, MVO, "A", RatingCategory(c2))
    result = rater_agreement(b.build(), MVO, "categories")
    assert result.n == 50
    assert result.kappa == pytest.approx(0.4, rel=1e-12)


def test_agreement_comparison_uses_linear_weights():
    b = overlap_builder(n_cases=6, nz=1)
    choices = [
        (ComparisonChoice.A, ComparisonChoice.A),
        (ComparisonChoice.A, ComparisonChoice.EQUAL),
        (ComparisonChoice.EQUAL, ComparisonChoice.EQUAL),
        (ComparisonChoice.B, ComparisonChoice.B),
        (ComparisonChoice.B, ComparisonChoice.A),
        (ComparisonChoice.EQUAL, ComparisonChoice.B),
    ]
    for pid, (c1, c2) in zip(b.case_ids, choices):
        rate_both_arms(b, "r1", pid, 0, SCAR)
        rate_both_arms(b, "r2", pid, 0, SCAR)
        b.compare("r1", pid, 0, SCAR, c1)
        b.compare("r2", pid, 0, SCAR, c2)
    result = rater_agreement(b.build(), SCAR, "comparison")
    assert result.n == 6
    assert result.matrix.labels == ("prefer_manual", "equal", "prefer_automatic")
    # cross-check against the stats module on the same matrix
    from lgetools.stats import cohen_kappa

    assert result.kappa == cohen_kappa(result.matrix, "linear")


def test_agreement_requires_overlap_data():
    b = DataBuilder(n_cases=2, raters=("r1", "r2"))  # no overlap
    with pytest.raises(UndefinedStatisticError):
        rater_agreement(b.build(), SCAR, "categories")


# -- patient contingency -----------------------------------------------------------


def test_contingency_all_true_negative_patient():
    b = DataBuilder(n_cases=1, raters=("r1",), nz=3)
    for sl in range(3):
        for arm in ("A", "B"):
            b.rate("r1", "p000", sl, MVO, arm, RatingCategory.TRUE_NEGATIVE)
    tables = patient_contingency_from_ratings(b.build(), MVO)
    assert tables["manual"] == Contingency(tp=0, fp=0, fn=0, tn=1)
    assert tables["automatic"] == Contingency(tp=0, fp=0, fn=0, tn=1)


def test_contingency_false_negative_rule():
    b = DataBuilder(n_cases=1, raters=("r1",), nz=3)
    auto_arm = b.arm_of("p000", Method.AUTOMATIC)
    manual_arm = b.arm_of("p000", Method.MANUAL)
    for sl in range(3):
        b.rate("r1", "p000", sl, MVO, manual_arm, RatingCategory.TRUE_NEGATIVE)
        cat = RatingCategory.FALSE_NEGATIVE if sl == 0 else RatingCategory.TRUE_NEGATIVE
        b.rate("r1", "p000", sl, MVO, auto_arm, cat)
    tables = patient_contingency_from_ratings(b.build(), MVO)
    assert tables["automatic"] == Contingency(tp=0, fp=0, fn=1, tn=0)
    assert tables["manual"] == Contingency(tp=0, fp=0, fn=0, tn=1)


def test_contingency_incomplete_patient_rejected():
    b = DataBuilder(n_cases=1, raters=("r1",), nz=2)
    b.rate("r1", "p000", 0, MVO, "A", RatingCategory.TRUE_NEGATIVE)  # slice 1 missing
    with pytest.raises(ValidationError, match="not rated"):
        patient_contingency_from_ratings(b.build(), MVO)


def test_contingency_wrong_organ_is_prediction_only():
    b = DataBuilder(n_cases=1, raters=("r1",), nz=1)
    arm = b.arm_of("p000", Method.AUTOMATIC)
    other = "B" if arm == "A" else "A"
    b.rate("r1", "p000", 0, MVO, arm, RatingCategory.WRONG_ORGAN)
    b.rate("r1", "p000", 0, MVO, other, RatingCategory.TRUE_NEGATIVE)
    tables = patient_contingency_from_ratings(b.build(), MVO)
    assert tables["automatic"] == Contingency(tp=0, fp=1, fn=0, tn=0)


# -- export / import ----------------------------------------------------------------


def test_export_empty_session_header_only():
    files = export_session_csvs(DataBuilder(n_cases=2).build())
    assert files["ratings.csv"].splitlines() == [
        "session_id,rater_id,patient_id,slice,class,arm,category,seq,timestamp"
    ]
    assert files["comparisons.csv"].splitlines() == [
        "session_id,rater_id,patient_id,slice,class,choice,seq,timestamp"
    ]
    assert len(files["assignments.csv"].splitlines()) == 3  # header + one row per case


def test_export_import_round_trip_preserves_aggregates():
    b = DataBuilder(n_cases=6, raters=("r1", "r2"), overlap=("p000", "p001"), nz=2)
    rng = np.random.default_rng(3)
    cats = list(RatingCategory)
    for pid in b.case_ids:
        raters = ("r1", "r2") if pid in b.overlap else ("r1",)
        for rater in raters:
            for sl in range(2):
                for arm in ("A", "B"):
                    b.rate(rater, pid, sl, SCAR, arm, cats[int(rng.integers(len(cats)))])
                pair = [e for e in b.ratings if e.key()[:5] == (rater, pid, sl, SCAR, "A")]
                b.compare(rater, pid, sl, SCAR, ComparisonChoice.EQUAL)
    data = b.build()
    files = export_session_csvs(data)
    restored = import_session_csvs(files)
    assert aggregate_proportions(restored, SCAR) == aggregate_proportions(data, SCAR)
    assert preference_summary(restored, SCAR) == preference_summary(data, SCAR)
    assert export_session_csvs(restored) == files  # fixed point


def test_export_supersession_latest_only():
    b = DataBuilder(n_cases=1, raters=("r1",))
    b.rate("r1", "p000", 0, SCAR, "A", RatingCategory.TOO_BIG)
    b.rate("r1", "p000", 0, SCAR, "A", RatingCategory.OPTIMAL)
    files = export_session_csvs(b.build())
    lines = files["ratings.csv"].splitlines()
    assert len(lines) == 2
    assert "optimal" in lines[1] and "too_big" not in lines[1]


def test_export_mapping_one_row_per_case():
    b = DataBuilder(n_cases=5)
    files = export_session_csvs(b.build())
    lines = files["assignments.csv"].splitlines()
    assert len(lines) == 6
    for pid, line in zip(b.case_ids, lines[1:]):
        assert line.startswith(f"s,{pid},")
