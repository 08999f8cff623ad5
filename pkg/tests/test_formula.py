import numpy as np
import pytest

from drbench.data import Dataset
from drbench.formula import (
    FormulaError,
    FormulaSpec,
    Term,
    build_design,
    interaction,
    main_effect,
    parse_formula,
    render_formula,
)


def _dataset(n=12, names=("A", "X1", "X2", "X5"), seed=0):
    rng = np.random.default_rng(seed)
    cov_names = tuple(v for v in names if v != "A")
    return Dataset(
        covariates=rng.normal(size=(n, len(cov_names))),
        covariate_names=cov_names,
        treatment=(rng.random(n) < 0.5).astype(float),
        outcome=rng.normal(size=n),
    )


class TestParse:
    def test_group_expansion(self):
        spec = parse_formula("(X1 + X2 + X5)^2")
        assert {t.label for t in spec.main_effects} == {"X1", "X2", "X5"}
        assert {t.label for t in spec.interactions} == {"X1:X2", "X1:X5", "X2:X5"}

    def test_response_and_mains(self):
        spec = parse_formula("Y ~ A + X1")
        assert spec.response == "Y"
        assert {t.label for t in spec.terms} == {"A", "X1"}
        assert not spec.interactions

    def test_treatment_interactions_with_expansion(self):
        spec = parse_formula("A + A:X1 + A:X217 + (X1 + X2 + X5 + X18 + X217)^2")
        assert {t.label for t in spec.main_effects} == {"A", "X1", "X2", "X5", "X18", "X217"}
        inters = {t.label for t in spec.interactions}
        assert {"A:X1", "A:X217"} <= inters
        assert len(inters) == 12  # the two treatment terms plus C(5,2) covariate pairs

    def test_duplicates_merge(self):
        a = parse_formula("X1 + X1 + X2:X1 + (X1 + X2)^2")
        assert [t.label for t in a.terms] == ["X1", "X2", "X1:X2"]

    def test_interaction_operand_order_is_canonical(self):
        assert parse_formula("X2:X1").terms == parse_formula("X1:X2").terms

    def test_syntax_error_carries_position(self):
        with pytest.raises(FormulaError) as err:
            parse_formula("X1 + + X2")
        assert err.value.position == 5

    def test_unknown_operator(self):
        with pytest.raises(FormulaError, match="unknown operator"):
            parse_formula("X1 * X2")

    def test_self_interaction_rejected(self):
        with pytest.raises(FormulaError, match="self-interaction"):
            parse_formula("X1:X1")

    def test_only_square_expansion(self):
        with pytest.raises(FormulaError, match="squared expansion"):
            parse_formula("(X1 + X2)^3")

    def test_empty_formula(self):
        with pytest.raises(FormulaError):
            parse_formula("   ")


class TestCanonicalization:
    def test_round_trip_random_formulas(self):
        rng = np.random.default_rng(7)
        vocab = [f"X{i}" for i in range(1, 12)] + ["A", "VAR_3"]
        for _ in range(200):
            pieces = []
            for _ in range(rng.integers(1, 6)):
                kind = rng.integers(0, 3)
                if kind == 0:
                    pieces.append(str(rng.choice(vocab)))
                elif kind == 1:
                    a, b = rng.choice(vocab, size=2, replace=False)
                    pieces.append(f"{a}:{b}")
                else:
                    k = rng.integers(2, 6)
                    group = rng.choice(vocab, size=k, replace=False)
                    pieces.append("(" + " + ".join(group) + ")^2")
            text = " + ".join(pieces)
            if rng.random() < 0.5:
                text = "Y ~ " + text
            spec = parse_formula(text)
            again = parse_formula(render_formula(spec))
            assert again == spec

    def test_expansion_count_property(self):
        for k in range(2, 11):
            group = [f"V{i}" for i in range(k)]
            spec = parse_formula("(" + "+".join(group) + ")^2")
            assert len(spec.terms) == k + k * (k - 1) // 2

    def test_terms_sorted_mains_before_interactions(self):
        spec = parse_formula("B:C + Z + A + A:Z")
        labels = [t.label for t in spec.terms]
        assert labels == ["A", "Z", "A:Z", "B:C"]


class TestTerm:
    def test_term_self_interaction(self):
        with pytest.raises(FormulaError):
            interaction("X1", "X1")

    def test_term_orders_operands(self):
        assert interaction("X9", "X10").label == "X10:X9"

    def test_treatment_must_be_present(self):
        with pytest.raises(FormulaError):
            FormulaSpec((main_effect("X1"),), treatment="A")


class TestBuildDesign:
    def test_override_zeroes_treatment_and_products(self):
        data = _dataset(n=10)
        spec = parse_formula("A + X1 + A:X1").with_treatment("A")
        # pin the first row to known values
        cov = data.covariates.copy()
        cov[0, 0] = 2.0
        trt = data.treatment.copy()
        trt[0] = 1.0
        data = Dataset(cov, data.covariate_names, trt, data.outcome)
        dm = build_design(spec, data, treatment_override=0)
        assert list(dm.columns) == ["(Intercept)", "A", "X1", "A:X1"]
        assert dm.values[0].tolist() == [1.0, 0.0, 2.0, 0.0]

    def test_products_exact(self):
        data = _dataset(n=10)
        cov = data.covariates.copy()
        cov[0, 0], cov[0, 1] = 3.0, 4.0
        data = Dataset(cov, data.covariate_names, data.treatment, data.outcome)
        dm = build_design(parse_formula("X1 + X2 + X1:X2"), data)
        assert dm.values[0].tolist() == [1.0, 3.0, 4.0, 12.0]
        inter = dm.column("X1:X2")
        assert np.array_equal(inter, dm.column("X1") * dm.column("X2"))

    def test_a_cor_formula_column_count(self):
        # oracle: enumerate the term set of the wide scenario-A formula
        from drbench.presets import FORMULA_A_OM

        spec = parse_formula(FORMULA_A_OM)
        mains = {"A", *(f"VAR_{i}" for i in range(1, 41)), "VAR_217"}
        assert {t.label for t in spec.main_effects} == mains
        assert len(spec.interactions) == 10
        rng = np.random.default_rng(1)
        n = 15
        data = Dataset(
            covariates=rng.normal(size=(n, 41)),
            covariate_names=tuple(f"VAR_{i}" for i in range(1, 41)) + ("VAR_217",),
            treatment=(rng.random(n) < 0.5).astype(float),
            outcome=rng.normal(size=n),
        )
        dm = build_design(spec, data)
        assert dm.values.shape[1] == 1 + 1 + 41 + 10  # 53 columns

    def test_override_matches_constant_column(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            data = _dataset(n=25, seed=trial)
            spec = parse_formula("A + X1 + X2 + A:X2 + X1:X2").with_treatment("A")
            for a in (0, 1):
                dm_override = build_design(spec, data, treatment_override=a)
                forced = Dataset(data.covariates, data.covariate_names,
                                 np.full(data.n, float(a)), data.outcome)
                dm_const = build_design(spec, forced)
                assert np.array_equal(dm_override.values, dm_const.values)

    def test_missing_variable(self):
        with pytest.raises(FormulaError, match="not present"):
            build_design(parse_formula("Q7"), _dataset())

    def test_override_requires_flagged_treatment(self):
        with pytest.raises(FormulaError, match="treatment_override"):
            build_design(parse_formula("A + X1"), _dataset(), treatment_override=1)
