from django import forms

from .services.core import ConfigurationError
from .services.harness import ALGORITHMS
from .services.registry import get_pool_spec, shift_case

SWEEP_PARAMS = [
    ('missing_p', 'Missing-entry probability'),
    ('subsidy', 'Loan subsidy e'),
    ('step_ratio', 'Step size (constant alpha or theoretic ratio)'),
    ('distribution', 'Distribution type'),
]


def _split(value: str):
    return [v.strip() for v in (value or '').split(',') if v.strip()]


def _check_pool_name(name: str):
    if name.startswith('csv:'):
        if not name[4:].strip():
            raise forms.ValidationError("csv: pool needs a path")
        return
    try:
        get_pool_spec(name)
    except ConfigurationError as e:
        raise forms.ValidationError(str(e))


class ScenarioForm(forms.Form):
    """[scenario] section"""

    name = forms.CharField(required=False, initial='scenario')
    pool = forms.CharField(required=False, initial='type5',
                           help_text="Registry name (type1..type30, group_basic, group_advanced_typeK) or csv:<path>")
    shifted_pool = forms.CharField(required=False)
    shift_period = forms.IntegerField(required=False, min_value=0)
    shift_case = forms.IntegerField(required=False, min_value=1, max_value=6)
    algorithms = forms.CharField(required=False, initial='learner,perfect',
                                 help_text="Comma separated: " + ", ".join(ALGORITHMS))
    T = forms.IntegerField(required=False, min_value=0, initial=500, label="Lending periods")
    N_t = forms.IntegerField(required=False, min_value=1, initial=10, label="Applicants per period")
    missing_p = forms.FloatField(required=False, min_value=0.0, max_value=1.0, initial=0.0)
    replications = forms.IntegerField(required=False, min_value=1)
    seed = forms.IntegerField(required=False, min_value=0, initial=0)
    pool_size = forms.IntegerField(required=False, min_value=1)
    n_features = forms.IntegerField(required=False, min_value=1, initial=100)
    group_mc_samples = forms.IntegerField(required=False, min_value=100, initial=10000)
    regret_sample = forms.IntegerField(required=False, min_value=0)

    def clean_algorithms(self):
        names = _split(self.cleaned_data.get('algorithms'))
        unknown = [n for n in names if n not in ALGORITHMS]
        if unknown:
            raise forms.ValidationError(f"Unknown algorithm(s): {', '.join(unknown)}")
        if len(set(names)) != len(names):
            raise forms.ValidationError("Algorithms must not repeat")
        return names

    def clean_pool(self):
        pool = (self.cleaned_data.get('pool') or '').strip()
        if pool:
            _check_pool_name(pool)
        return pool

    def clean_shifted_pool(self):
        pool = (self.cleaned_data.get('shifted_pool') or '').strip()
        if pool:
            _check_pool_name(pool)
        return pool

    def clean(self):
        cleaned = super().clean()
        if cleaned.get('shift_case') and cleaned.get('shifted_pool'):
            raise forms.ValidationError("Use either shift_case or shifted_pool, not both")
        if cleaned.get('shift_case'):
            case = shift_case(cleaned['shift_case'])
            if cleaned.get('pool') and cleaned['pool'] != case.before:
                raise forms.ValidationError(
                    f"shift_case {cleaned['shift_case']} starts from {case.before}, not {cleaned['pool']}")
        shift_period, T = cleaned.get('shift_period'), cleaned.get('T')
        if shift_period is not None and T is not None and shift_period >= T:
            raise forms.ValidationError(f"shift_period ({shift_period}) must be smaller than T ({T})")
        return cleaned


class LearnerForm(forms.Form):
    """[learner] section"""

    LINK_CHOICES = [('A', 'Case A: 1 - exp(-q)'), ('B', 'Case B: 2e^q/(1+e^q) - 1')]
    STEP_CHOICES = [('constant', 'Constant alpha'), ('theoretic', 'ratio / sqrt(t)')]

    link = forms.ChoiceField(required=False, choices=LINK_CHOICES, initial='A')
    step = forms.ChoiceField(required=False, choices=STEP_CHOICES, initial='constant')
    alpha = forms.FloatField(required=False, min_value=1e-12, initial=0.1,
                             help_text="Constant step size, or the ratio D/G for the theoretic schedule")
    box_lo = forms.FloatField(required=False, min_value=0.0, initial=0.0)
    box_hi = forms.FloatField(required=False, initial=10.0)
    init_lo = forms.FloatField(required=False, min_value=0.0, initial=0.0)
    init_hi = forms.FloatField(required=False, initial=1.0)
    num_candidates = forms.IntegerField(required=False, min_value=1, initial=10)
    keep_best = forms.IntegerField(required=False, min_value=1, initial=5)
    fresh_random = forms.IntegerField(required=False, min_value=0, initial=5)
    multi_periods = forms.IntegerField(required=False, min_value=0, initial=50)
    window = forms.IntegerField(required=False, min_value=1, initial=5)

    def clean(self):
        cleaned = super().clean()
        lo = cleaned.get('box_lo') if cleaned.get('box_lo') is not None else 0.0
        hi = cleaned.get('box_hi') if cleaned.get('box_hi') is not None else 10.0
        if hi <= lo:
            raise forms.ValidationError(f"box_hi ({hi}) must exceed box_lo ({lo})")
        counts = [cleaned.get(k) for k in ('num_candidates', 'keep_best', 'fresh_random')]
        if any(c is not None for c in counts):
            num = counts[0] if counts[0] is not None else 10
            keep = counts[1] if counts[1] is not None else 5
            fresh = counts[2] if counts[2] is not None else 5
            if keep + fresh != num:
                raise forms.ValidationError(f"keep_best + fresh_random must equal num_candidates ({keep}+{fresh}!={num})")
        return cleaned


class UtilityForm(forms.Form):
    """[utility] section"""

    interest_rate = forms.FloatField(required=False, min_value=1e-12, initial=0.35)
    subsidy = forms.FloatField(required=False, min_value=0.0, max_value=1.0, initial=0.0)
    logistic_learning_rate = forms.FloatField(required=False, min_value=1e-12, initial=0.1)


class SweepForm(forms.Form):
    """[sweep] section"""

    param = forms.ChoiceField(required=False, choices=SWEEP_PARAMS)
    values = forms.CharField(required=False)

    def clean(self):
        cleaned = super().clean()
        param = cleaned.get('param')
        values = _split(cleaned.get('values'))
        if bool(param) != bool(values):
            raise forms.ValidationError("A sweep needs both param and values")
        if param == 'distribution':
            for v in values:
                _check_pool_name(v)
        elif param:
            try:
                values = [float(v) for v in values]
            except ValueError:
                raise forms.ValidationError(f"Sweep values for {param} must be numbers")
            if param in ('missing_p', 'subsidy') and any(not 0.0 <= v <= 1.0 for v in values):
                raise forms.ValidationError(f"{param} values must lie in [0, 1]")
            if param == 'step_ratio' and any(v <= 0 for v in values):
                raise forms.ValidationError("step_ratio values must be positive")
        cleaned['values'] = values
        return cleaned


class PoolForm(forms.Form):
    """[pool] section, used by the pool command"""

    source = forms.CharField(required=False, help_text="Registry name or csv:<path>; defaults to [scenario] pool")
    size = forms.IntegerField(required=False, min_value=0)
    output = forms.CharField(required=False, initial='pool.csv')
    augment = forms.BooleanField(required=False,
                                 help_text="Fit a logistic model to the source and sample a synthetic pool from it")
    default_fraction = forms.FloatField(required=False, min_value=0.0, max_value=1.0,
                                        help_text="Resample labelled rows with this share of defaulted rows")

    def clean_source(self):
        source = (self.cleaned_data.get('source') or '').strip()
        if source:
            _check_pool_name(source)
        return source

    def clean(self):
        cleaned = super().clean()
        if cleaned.get('augment') and cleaned.get('default_fraction') is not None:
            raise forms.ValidationError("Use either augment or default_fraction, not both")
        return cleaned


class ReportForm(forms.Form):
    """[report] section"""

    inputs = forms.CharField(required=False, help_text="Comma separated result directories")

    def clean_inputs(self):
        return _split(self.cleaned_data.get('inputs'))


SECTION_FORMS = {
    'scenario': ScenarioForm,
    'learner': LearnerForm,
    'utility': UtilityForm,
    'sweep': SweepForm,
    'pool': PoolForm,
    'report': ReportForm,
}
