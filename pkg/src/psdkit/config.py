"""Plain-text key=value configuration files and deterministic seed fan-out.

Config files hold ``key = value`` lines, optionally grouped under
``[section]`` headers; lines before any header live in the "" section.
``#`` and ``;`` start comments. Values are kept as strings and coerced at
the point of use.
"""

from __future__ import annotations

import hashlib

from .pulse import SynthParams


class ConfigError(ValueError):
    """Malformed configuration file or invalid option value."""


def parse_kv_text(text: str, origin: str = "<config>") -> dict:
    sections: dict = {"": {}}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        sections[current][key.strip()] = value.strip()
    return sections


def parse_kv_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read(), origin=str(path))


def as_int(sections: dict, section: str, key: str, default: int) -> int:
    raw = sections.get(section, {}).get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected integer, got {raw!r}") from None


def as_float(sections: dict, section: str, key: str, default: float) -> float:
    raw = sections.get(section, {}).get(key)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected number, got {raw!r}") from None


def as_bool(sections: dict, section: str, key: str, default: bool) -> bool:
    raw = sections.get(section, {}).get(key)
    if raw is None:
        return default
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected boolean, got {raw!r}")


def as_str(sections: dict, section: str, key: str, default: str) -> str:
    return sections.get(section, {}).get(key, default)


def as_list(sections: dict, section: str, key: str, default=None) -> list:
    raw = sections.get(section, {}).get(key)
    if raw is None:
        return list(default or [])
    return [token.strip() for token in raw.split(",") if token.strip()]


def derive_seed(base_seed: int, name: str) -> int:
    """Per-component seed: base seed mixed with a stable name hash.

    Uses SHA-256 so the fan-out is identical across platforms and runs.
    """
    digest = hashlib.sha256(f"{base_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 63)


def _synth_params_from(sections: dict, section: str, fallback: str,
                       defaults: SynthParams) -> SynthParams:
    def pick(key, default, cast=float):
        raw = sections.get(section, {}).get(key)
        if raw is None:
            raw = sections.get(fallback, {}).get(key)
        if raw is None:
            return default
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key}: bad value {raw!r}") from None

    amp_raw = sections.get(section, {}).get("amplitude_range") or \
        sections.get(fallback, {}).get("amplitude_range")
    if amp_raw is None:
        amplitude_range = defaults.amplitude_range
    else:
        parts = [p.strip() for p in amp_raw.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"[{section}] amplitude_range: expected 'min, max'")
        amplitude_range = (float(parts[0]), float(parts[1]))

    try:
        return SynthParams(
            tau_rise=pick("tau_rise", defaults.tau_rise),
            tau_fast=pick("tau_fast", defaults.tau_fast),
            tau_slow=pick("tau_slow", defaults.tau_slow),
            tail_ratio=pick("tail_ratio", defaults.tail_ratio),
            amplitude_range=amplitude_range,
            noise_sigma=pick("noise_sigma", defaults.noise_sigma),
            length=pick("length", defaults.length, int),
            seed=pick("seed", defaults.seed, int),
        )
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def load_synth_config(sections: dict, base_seed: int = 0) -> tuple:
    """Synthetic-generator settings: counts and per-class parameters.

    Shared keys live in [synth]; [synth.neutron] / [synth.gamma] override
    per class. Class seeds default to a fan-out of the base seed.
    """
    n_neutron = as_int(sections, "synth", "n_neutron", 1000)
    n_gamma = as_int(sections, "synth", "n_gamma", 1000)
    neutron_defaults = SynthParams(tail_ratio=0.35, seed=derive_seed(base_seed, "synth.neutron"))
    gamma_defaults = SynthParams(tail_ratio=0.10, seed=derive_seed(base_seed, "synth.gamma"))
    p_n = _synth_params_from(sections, "synth.neutron", "synth", neutron_defaults)
    p_g = _synth_params_from(sections, "synth.gamma", "synth", gamma_defaults)
    return n_neutron, n_gamma, p_n, p_g
