from __future__ import annotations

import pytest

from gda.casedata import DiagnosisLabel, PatientCase


def make_table2_case() -> PatientCase:
    """The boy from the full worked case: 7y2m, 144.0 cm, 18 kg, bone age 4.8y,
    GH stimulation peaking at 13.48. The implausible height/weight pair is kept
    as printed; validation deliberately checks ranges only, not cross-field
    plausibility."""
    return PatientCase(
        case_id="table2",
        gender="male",
        age_months=86.0,
        height_cm=144.0,
        weight_kg=18.0,
        gestational_age_weeks=40.0,
        birth_weight_kg=5.4,
        birth_length_cm=50.0,
        father_height_cm=176.0,
        mother_height_cm=152.0,
        labs={"blood_glucose": 4.76, "FT3": 7.8, "FT4": 1.42},
        gh_stimulation=[(9.0, 0.51), (30.0, 1.17), (60.0, 12.9), (90.0, 13.48)],
        bone_age_months=57.6,
        diagnosis=DiagnosisLabel.IdiopathicShortStature,
    )


@pytest.fixture
def table2_case() -> PatientCase:
    return make_table2_case()
