"""Built-in simulation scenario presets.

Three plasmode scenario families (A: interactions among covariates in a
wide model; B: a narrow true model estimated with excess covariates; C:
treatment-covariate interactions) ship with fixed data-generating
coefficient tables, plus the five-confounder hard DGP. Each preset pairs a
data-generating mechanism with the estimation formulas used against it.

The coefficient tables were fit to a confidential cohort whose covariates
are not distributable; applied to the synthesized surrogate source their
implied marginal effects differ from the original study, so scenario truths
are always recomputed rather than asserted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from drbench.data import Dataset
from drbench.formula import parse_formula
from drbench.plasmode import (
    KangSchaferGenerator,
    PlasmodeGenerator,
    ScenarioSpec,
    generate_surrogate_source,
    make_plasmode_generator,
)

INDEX_SET_10 = (4, 7, 9, 16, 17, 27, 28, 31, 34, 39)

_G5 = "VAR_1 + VAR_2 + VAR_5 + VAR_18 + VAR_217"
_MAINS_40 = " + ".join(f"VAR_{i}" for i in range(1, 41))
_MAINS_I10 = " + ".join(f"VAR_{i}" for i in INDEX_SET_10)

FORMULA_A_OM = f"Y ~ A + ({_G5})^2 + {_MAINS_40}"
FORMULA_A_PS = f"A ~ ({_G5})^2 + {_MAINS_40}"
FORMULA_A_NOINT_OM = f"Y ~ A + {_G5} + {_MAINS_40}"
FORMULA_A_NOINT_PS = f"A ~ {_G5} + {_MAINS_40}"
FORMULA_B_OM = f"Y ~ A + ({_G5})^2 + {_MAINS_I10}"
FORMULA_B_PS = f"A ~ ({_G5})^2 + {_MAINS_I10}"
FORMULA_C_OM = f"Y ~ (A + {_G5})^2"
FORMULA_C_PS = f"A ~ ({_G5})^2"
FORMULA_C_PART_OM = f"Y ~ A + A:VAR_1 + A:VAR_217 + ({_G5})^2"
FORMULA_C_BAD_OM = f"Y ~ A + ({_G5})^2"
FORMULA_KS_OM = "Y ~ A + W1 + W2 + W3 + W4 + W5"
FORMULA_KS_PS = "A ~ W1 + W2 + W3 + W4 + W5"

# data-generating coefficients, scenario A (outcome model, treatment model)
_A_OM = {
    "(Intercept)": -3.66,
    "VAR_1": 0.83, "VAR_2": 0.03, "VAR_5": 0.10, "VAR_18": 0.15, "VAR_217": 0.29,
    "VAR_3": -0.03, "VAR_4": -0.00, "VAR_6": -0.12, "VAR_7": 0.01, "VAR_8": 0.02,
    "VAR_9": 0.38, "VAR_10": 0.02, "VAR_11": -0.01, "VAR_12": 0.00, "VAR_13": 0.07,
    "VAR_14": 0.03, "VAR_15": -0.00, "VAR_16": 0.34, "VAR_17": 0.05, "VAR_19": -0.01,
    "VAR_20": 0.01, "VAR_21": 0.00, "VAR_22": 0.01, "VAR_23": -0.00, "VAR_24": -0.00,
    "VAR_25": 0.02, "VAR_26": -0.01, "VAR_27": 0.00, "VAR_28": -0.01, "VAR_29": -0.00,
    "VAR_30": -0.03, "VAR_31": 0.00, "VAR_32": 0.06, "VAR_33": 0.04, "VAR_34": 0.00,
    "VAR_35": 0.01, "VAR_36": 0.00, "VAR_37": 0.06, "VAR_38": -0.00, "VAR_39": -0.09,
    "VAR_40": 0.52,
    "VAR_1:VAR_2": -0.01, "VAR_1:VAR_5": -0.18, "VAR_1:VAR_18": -0.17,
    "VAR_1:VAR_217": 0.03, "VAR_2:VAR_5": 0.04, "VAR_2:VAR_18": -0.02,
    "VAR_2:VAR_217": 0.03, "VAR_5:VAR_18": 0.04, "VAR_5:VAR_217": -0.06,
    "VAR_18:VAR_217": 0.00,
}
_A_PS = {
    "(Intercept)": -0.29,
    "VAR_1": -0.61, "VAR_2": 0.24, "VAR_5": 0.06, "VAR_18": 0.11, "VAR_217": -1.63,
    "VAR_3": -0.09, "VAR_4": 0.04, "VAR_6": -0.42, "VAR_7": 0.17, "VAR_8": -0.06,
    "VAR_9": 0.07, "VAR_10": 0.22, "VAR_11": -0.16, "VAR_12": 0.21, "VAR_13": 0.20,
    "VAR_14": 0.16, "VAR_15": -0.35, "VAR_16": 0.07, "VAR_17": 0.17, "VAR_19": 0.30,
    "VAR_20": -0.07, "VAR_21": 0.03, "VAR_22": 0.09, "VAR_23": -0.08, "VAR_24": -0.16,
    "VAR_25": 0.15, "VAR_26": -0.00, "VAR_27": 0.00, "VAR_28": -0.01, "VAR_29": 0.01,
    "VAR_30": -0.59, "VAR_31": 0.00, "VAR_32": 0.27, "VAR_33": -0.62, "VAR_34": -0.01,
    "VAR_35": 0.16, "VAR_36": -0.00, "VAR_37": 0.08, "VAR_38": 0.00, "VAR_39": 0.11,
    "VAR_40": -0.53,
    "VAR_1:VAR_2": 0.01, "VAR_1:VAR_5": 0.08, "VAR_1:VAR_18": -0.13,
    "VAR_1:VAR_217": 0.64, "VAR_2:VAR_5": 0.14, "VAR_2:VAR_18": -0.19,
    "VAR_2:VAR_217": -0.00, "VAR_5:VAR_18": 0.18, "VAR_5:VAR_217": 0.35,
    "VAR_18:VAR_217": -0.02,
}

# scenario B
_B_OM = {
    "(Intercept)": -3.77,
    "VAR_1": 0.89, "VAR_2": 0.13, "VAR_5": 0.06, "VAR_18": 0.21, "VAR_217": 0.29,
    "VAR_34": 0.00, "VAR_27": -0.00, "VAR_4": -0.01, "VAR_31": -0.00, "VAR_28": -0.01,
    "VAR_17": 0.05, "VAR_16": 0.34, "VAR_9": 0.50, "VAR_7": 0.05, "VAR_39": -0.09,
    "VAR_1:VAR_2": -0.03, "VAR_1:VAR_5": -0.19, "VAR_1:VAR_18": -0.17,
    "VAR_1:VAR_217": 0.04, "VAR_2:VAR_5": 0.04, "VAR_2:VAR_18": -0.01,
    "VAR_2:VAR_217": 0.01, "VAR_5:VAR_18": 0.02, "VAR_5:VAR_217": -0.05,
    "VAR_18:VAR_217": 0.01,
}
_B_PS = {
    "(Intercept)": -10.35,
    "VAR_1": 0.22, "VAR_2": 0.67, "VAR_5": 0.45, "VAR_18": 0.62, "VAR_217": -1.77,
    "VAR_34": -0.00, "VAR_27": -0.00, "VAR_4": -0.02, "VAR_31": -0.00, "VAR_28": 0.00,
    "VAR_17": 0.21, "VAR_16": 0.09, "VAR_9": 0.68, "VAR_7": 0.04, "VAR_39": -0.01,
    "VAR_1:VAR_2": -0.10, "VAR_1:VAR_5": -0.10, "VAR_1:VAR_18": -0.03,
    "VAR_1:VAR_217": 0.45, "VAR_2:VAR_5": 0.11, "VAR_2:VAR_18": 0.02,
    "VAR_2:VAR_217": 0.12, "VAR_5:VAR_18": -0.13, "VAR_5:VAR_217": 0.43,
    "VAR_18:VAR_217": 0.02,
}

# scenario C (treatment interactions appear in the outcome model only)
_C_OM = {
    "(Intercept)": 12.49,
    "VAR_1": 1.16, "VAR_2": -0.37, "VAR_5": -0.19, "VAR_18": -0.01, "VAR_217": 0.64,
    "A:VAR_1": -1.37, "A:VAR_2": 0.41, "A:VAR_5": -1.89, "A:VAR_18": 0.04,
    "A:VAR_217": 1.24,
    "VAR_1:VAR_2": -0.08, "VAR_1:VAR_5": -0.26, "VAR_1:VAR_18": -0.19,
    "VAR_1:VAR_217": 0.02, "VAR_2:VAR_5": 0.27, "VAR_2:VAR_18": -0.00,
    "VAR_2:VAR_217": 0.03, "VAR_5:VAR_18": 0.11, "VAR_5:VAR_217": -0.17,
    "VAR_18:VAR_217": 0.08,
}
_C_PS = {
    "(Intercept)": -4.86,
    "VAR_1": 0.38, "VAR_2": 0.63, "VAR_5": 0.64, "VAR_18": 0.45, "VAR_217": -1.64,
    "VAR_1:VAR_2": -0.13, "VAR_1:VAR_5": -0.18, "VAR_1:VAR_18": -0.03,
    "VAR_1:VAR_217": 0.45, "VAR_2:VAR_5": 0.14, "VAR_2:VAR_18": 0.03,
    "VAR_2:VAR_217": 0.12, "VAR_5:VAR_18": -0.06, "VAR_5:VAR_217": 0.37,
    "VAR_18:VAR_217": 0.03,
}


def _scenario(name: str, om_formula: str, ps_formula: str, om_coefs, ps_coefs,
              true_ate: float = 6.6, inflation: float = 1.0,
              subset: Optional[tuple[int, ...]] = None) -> ScenarioSpec:
    om = parse_formula(om_formula).with_treatment("A")
    ps = parse_formula(ps_formula)
    return ScenarioSpec(
        name=name,
        om_formula=om,
        ps_formula=ps,
        true_ate=true_ate,
        interaction_inflation=inflation,
        covariate_subset=subset,
        preset_coefficients=(om_coefs, ps_coefs),
    )


SCENARIO_A = _scenario("A", FORMULA_A_OM, FORMULA_A_PS, _A_OM, _A_PS)
SCENARIO_B = _scenario("B", FORMULA_B_OM, FORMULA_B_PS, _B_OM, _B_PS,
                       subset=INDEX_SET_10)
SCENARIO_C = _scenario("C", FORMULA_C_OM, FORMULA_C_PS, _C_OM, _C_PS,
                       inflation=5.0)


@dataclass(frozen=True)
class PresetBundle:
    """A data-generating mechanism paired with estimation formulas."""

    name: str
    estimation_om: str
    estimation_ps: str
    scenario: Optional[ScenarioSpec] = None  # None: the hard five-confounder DGP

    @property
    def is_plasmode(self) -> bool:
        return self.scenario is not None

    def build_generator(self, source: Optional[Dataset] = None, seed: int = 0,
                        n: int = 600):
        """Materialize the generator (plasmode needs a source; None synthesizes one)."""
        if self.scenario is None:
            return KangSchaferGenerator(n=n)
        if source is None:
            source = generate_surrogate_source(seed=seed)
        return make_plasmode_generator(source, self.scenario, seed=seed)


PRESETS = {
    "kang-schafer": PresetBundle("kang-schafer", FORMULA_KS_OM, FORMULA_KS_PS, None),
    "A.cor": PresetBundle("A.cor", FORMULA_A_OM, FORMULA_A_PS, SCENARIO_A),
    "A.no.int": PresetBundle("A.no.int", FORMULA_A_NOINT_OM, FORMULA_A_NOINT_PS, SCENARIO_A),
    "A.less.1st": PresetBundle("A.less.1st", FORMULA_B_OM, FORMULA_B_PS, SCENARIO_A),
    "B.cor": PresetBundle("B.cor", FORMULA_B_OM, FORMULA_B_PS, SCENARIO_B),
    "B": PresetBundle("B", FORMULA_A_OM, FORMULA_A_PS, SCENARIO_B),
    "C.cor": PresetBundle("C.cor", FORMULA_C_OM, FORMULA_C_PS, SCENARIO_C),
    "C.part": PresetBundle("C.part", FORMULA_C_PART_OM, FORMULA_C_PS, SCENARIO_C),
    "C.bad": PresetBundle("C.bad", FORMULA_C_BAD_OM, FORMULA_C_PS, SCENARIO_C),
}


def get_preset(name: str) -> PresetBundle:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
