"""
Experiment configuration.

An INI file with [scenario], [learner], [utility], [sweep], [pool] and
[report] sections is parsed with configparser, each section validated by its
Django form, then profile defaults fill whatever the file leaves unset.
"""
from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .core import Box, ConfigParseError, ConfigurationError, UtilityConfig
from .harness import DEFAULT_SHIFT_PERIOD, ScenarioConfig
from .learner import LearnerConfig, MultiStartConfig, StepSchedule
from .policy import LinkKind
from .registry import shift_case

logger = logging.getLogger(__name__)

PROFILES: Dict[str, Dict[str, Dict[str, str]]] = {
    'quick': {
        'scenario': {'pool_size': '100000', 'replications': '10', 'regret_sample': '2000'},
        'pool': {'size': '100000'},
    },
    'paper': {
        'scenario': {'pool_size': '1000000', 'replications': '50', 'regret_sample': '2000'},
        'pool': {'size': '1000000'},
    },
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'scenario': {'name': 'scenario', 'pool': 'type5', 'algorithms': ['learner', 'perfect'], 'T': 500,
                 'N_t': 10, 'missing_p': 0.0, 'replications': 10, 'seed': 0, 'pool_size': 100_000,
                 'n_features': 100, 'group_mc_samples': 10_000, 'regret_sample': 0},
    'learner': {'link': 'A', 'step': 'constant', 'alpha': 0.1, 'box_lo': 0.0, 'box_hi': 10.0,
                'init_lo': 0.0, 'init_hi': 1.0, 'num_candidates': 10, 'keep_best': 5, 'fresh_random': 5,
                'multi_periods': 50, 'window': 5},
    'utility': {'interest_rate': 0.35, 'subsidy': 0.0, 'logistic_learning_rate': 0.1},
    'sweep': {'param': '', 'values': []},
    'pool': {'source': '', 'size': 100_000, 'output': 'pool.csv', 'augment': False, 'default_fraction': None},
    'report': {'inputs': []},
}


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: Tuple[Any, ...]


@dataclass(frozen=True)
class PoolCommandSpec:
    source: str
    size: int
    output: str
    augment: bool = False
    default_fraction: Optional[float] = None


@dataclass
class ResolvedConfig:
    profile: str
    seed: int
    scenario: ScenarioConfig
    sweep: Optional[SweepSpec]
    pool: PoolCommandSpec
    report_inputs: List[str]
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {'profile': self.profile, 'seed': self.seed, **self.sections}


def read_ini(text: str, source: str = '<config>') -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, default_section='__defaults__')
    parser.optionxform = str  # keys are case-sensitive (T, N_t)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigParseError(f"{source}, line {e.lineno}: key outside of any [section]")
    except configparser.ParsingError as e:
        lineno, line = e.errors[0] if e.errors else (None, '')
        raise ConfigParseError(f"{source}, line {lineno}: cannot parse {line.strip() if line else ''!r}")
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigParseError(f"{source}, line {e.lineno}: {e.message}")
    except configparser.Error as e:
        raise ConfigParseError(f"{source}: {e}")
    return {name: dict(parser.items(name)) for name in parser.sections()}


def _validate(raw: Dict[str, Dict[str, str]]) -> Dict[str, Dict[str, Any]]:
    from ..forms import SECTION_FORMS

    cleaned: Dict[str, Dict[str, Any]] = {}
    for section, values in raw.items():
        form_class = SECTION_FORMS.get(section)
        if form_class is None:
            raise ConfigurationError(f"unknown config section [{section}]")
        form = form_class(data=values)
        unknown = sorted(set(values) - set(form.fields))
        if unknown:
            raise ConfigurationError(f"unknown config key {section}.{unknown[0]}")
        if not form.is_valid():
            field_name, errors = next(iter(form.errors.items()))
            where = f"{section}.{field_name}" if field_name != '__all__' else f"[{section}]"
            raise ConfigurationError(f"invalid value for {where}: {' '.join(errors)}")
        cleaned[section] = {k: v for k, v in form.cleaned_data.items() if k in values}
    return cleaned


def _merge(cleaned: Dict[str, Dict[str, Any]], profile: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    merged: Dict[str, Dict[str, Any]] = {}
    for section, defaults in DEFAULTS.items():
        merged[section] = dict(defaults)
        merged[section].update(profile.get(section, {}))
        merged[section].update(cleaned.get(section, {}))
    return merged


def load_config(path: Optional[str] = None, profile: str = 'quick', seed: Optional[int] = None,
                text: Optional[str] = None) -> ResolvedConfig:
    """Parse, validate and resolve a config; `--seed` wins over the file."""
    if profile not in PROFILES:
        raise ConfigurationError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    source = '<config>'
    if text is None and path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding='utf-8')
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}")
        except OSError as e:
            raise ConfigurationError(f"cannot read config file {path}: {e}")
    raw = read_ini(text or '', source)
    cleaned = _validate(raw)
    profile_values = _validate(PROFILES[profile])
    sections = _merge(cleaned, profile_values)
    if seed is not None:
        sections['scenario']['seed'] = int(seed)
    resolved = _build(sections, profile)
    logger.info(f"Loaded config from {source} (profile={profile}, seed={resolved.seed})")
    return resolved


def build_learner(section: Dict[str, Any], seed: int) -> LearnerConfig:
    schedule = StepSchedule(section['step'], float(section['alpha']))
    multi = MultiStartConfig(section['num_candidates'], section['keep_best'], section['fresh_random'],
                             section['multi_periods'], section['window'])
    return LearnerConfig(link=LinkKind.parse(section['link']), schedule=schedule,
                         box=Box(section['box_lo'], section['box_hi']), multi_start=multi,
                         init_range=(section['init_lo'], section['init_hi']), seed=seed)


def _build(sections: Dict[str, Dict[str, Any]], profile: str) -> ResolvedConfig:
    sc, ut = sections['scenario'], sections['utility']
    seed = int(sc['seed'])
    utility = UtilityConfig(ut['interest_rate'], ut['subsidy'])
    learner = build_learner(sections['learner'], seed)

    pool, shifted, shift_period = sc['pool'], sc.get('shifted_pool') or None, sc.get('shift_period')
    if sc.get('shift_case'):
        case = shift_case(sc['shift_case'])
        pool, shifted = case.before, case.after
    if shifted and shift_period is None:
        shift_period = DEFAULT_SHIFT_PERIOD
        sc['shift_period'] = shift_period

    scenario = ScenarioConfig(
        name=sc['name'], pool=pool, shifted_pool=shifted, shift_period=shift_period if shifted else None,
        algorithms=tuple(sc['algorithms']), learner=learner, utility=utility, T=sc['T'], N_t=sc['N_t'],
        missing_p=sc['missing_p'], replications=sc['replications'], seed=seed, pool_size=sc['pool_size'],
        n_features=sc['n_features'], group_mc_samples=sc['group_mc_samples'],
        logistic_learning_rate=ut['logistic_learning_rate'], regret_sample=sc['regret_sample'],
    )
    sw = sections['sweep']
    sweep = SweepSpec(sw['param'], tuple(sw['values'])) if sw.get('param') else None
    pl = sections['pool']
    pool_spec = PoolCommandSpec(pl['source'] or pool, int(pl['size']), pl['output'] or 'pool.csv',
                                bool(pl['augment']), pl['default_fraction'])
    return ResolvedConfig(profile, seed, scenario, sweep, pool_spec, list(sections['report']['inputs']),
                          sections)


def _label(value: Any) -> str:
    return f"{value:g}" if isinstance(value, float) else str(value)


def expand_sweep(base: ScenarioConfig, sweep: Optional[SweepSpec]) -> List[Tuple[ScenarioConfig, Optional[Dict[str, Any]]]]:
    """One scenario per sweep value (the base scenario alone without a sweep)."""
    if sweep is None:
        return [(base, None)]
    scenarios = []
    for value in sweep.values:
        name = f"{base.name}_{sweep.param}={_label(value)}"
        if sweep.param == 'missing_p':
            cfg = replace(base, name=name, missing_p=float(value))
        elif sweep.param == 'subsidy':
            cfg = replace(base, name=name, utility=replace(base.utility, subsidy=float(value)))
        elif sweep.param == 'step_ratio':
            schedule = replace(base.learner.schedule, value=float(value))
            cfg = replace(base, name=name, learner=replace(base.learner, schedule=schedule))
        elif sweep.param == 'distribution':
            cfg = replace(base, name=name, pool=str(value), shifted_pool=None, shift_period=None)
        else:
            raise ConfigurationError(f"unknown sweep parameter {sweep.param!r}")
        scenarios.append((cfg, {'param': sweep.param, 'value': value}))
    return scenarios
