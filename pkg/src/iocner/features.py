"""Hand-crafted token spelling features and their trainable projection."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from urllib.parse import urlsplit

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

N_FEATURES = 22

FEATURE_NAMES = (
    "ipv4", "domain", "hash", "url", "vulnerability", "file_info", "email", "malware",
    "has_digit", "only_digit", "has_alpha", "only_alpha", "has_digit_and_alpha", "only_alnum",
    "has_dot", "n_dot", "has_backslash", "n_backslash", "has_at", "n_at", "has_colon", "n_colon",
)

# Column of each IOC-type feature, keyed by entity type display name.
TYPE_FEATURE = {
    "IPv4": 0,
    "domain": 1,
    "file hash": 2,
    "URL": 3,
    "vulnerability": 4,
    "file information": 5,
    "e-mail address": 6,
    "malware": 7,
}

DELIMITERS = (".", "\\", "@", ":")

TLD_ENV_VAR = "IOCNER_TLD_PATH"

_IPV4 = re.compile(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})(?::(\d{1,5}))?$")
_HASH = re.compile(r"^(?:[0-9a-fA-F]{32}|[0-9a-fA-F]{40}|[0-9a-fA-F]{64})$")
_URL = re.compile(r"^https?://[0-9a-zA-Z_.\-/]+$")
_CVE = re.compile(r"^CVE-[0-9]{4}-[0-9]{4,6}$")
_FILE_INFO = re.compile(r"^[a-zA-Z]:\\[0-9a-zA-Z_.\-\\]+$")
_EMAIL = re.compile(r"^([0-9a-zA-Z_.\-]+)@(.+)$")
_LABEL = re.compile(r"^[0-9a-zA-Z\-]+$")


def read_list_file(path) -> list[str]:
    """Read a one-entry-per-line list with '#' comments."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                out.append(line)
    return out


def _bundled(name):
    return resources.files("iocner").joinpath("data").joinpath(name)


@dataclass(frozen=True)
class FeatureConfig:
    tld_set: frozenset
    malware_prefixes: tuple
    malware_delimiters: frozenset = frozenset(":/.!")

    def __post_init__(self):
        if not self.tld_set:
            raise ValueError("tld_set must be non-empty")
        if not self.malware_prefixes:
            raise ValueError("malware_prefixes must be non-empty")
        object.__setattr__(self, "tld_set", frozenset(t.lower() for t in self.tld_set))
        # longest first so TrojanDownloader is tried before Trojan
        prefixes = sorted({p.lower() for p in self.malware_prefixes}, key=lambda p: (-len(p), p))
        object.__setattr__(self, "malware_prefixes", tuple(prefixes))
        object.__setattr__(self, "malware_delimiters", frozenset(self.malware_delimiters))

    @classmethod
    def load(cls, tld_path=None, malware_path=None) -> "FeatureConfig":
        """Build a config from list files.

        ``tld_path`` falls back to ``$IOCNER_TLD_PATH`` and then to the bundled list.
        """
        tld_path = tld_path or os.environ.get(TLD_ENV_VAR)
        if tld_path is None:
            with resources.as_file(_bundled("tlds.txt")) as p:
                tlds = read_list_file(p)
        else:
            tlds = read_list_file(Path(tld_path))
        if malware_path is None:
            with resources.as_file(_bundled("malware_prefixes.txt")) as p:
                prefixes = read_list_file(p)
        else:
            prefixes = read_list_file(Path(malware_path))
        return cls(frozenset(tlds), tuple(prefixes))


_default_config = None


def default_config() -> FeatureConfig:
    global _default_config
    if _default_config is None:
        _default_config = FeatureConfig.load()
    return _default_config


def is_ipv4(s: str) -> bool:
    m = _IPV4.match(s)
    if not m:
        return False
    if any(int(octet) > 255 for octet in m.groups()[:4]):
        return False
    return m.group(5) is None or int(m.group(5)) <= 65535


def is_domain(s: str, config: FeatureConfig) -> bool:
    parts = s.split(".")
    if len(parts) < 2 or not all(_LABEL.match(p) for p in parts):
        return False
    return parts[-1].lower() in config.tld_set


def has_domain(s: str, config: FeatureConfig) -> bool:
    """Domain test on the host part of URL-like tokens, on the token otherwise."""
    if "://" in s:
        try:
            host = urlsplit(s).hostname or ""
        except ValueError:
            return False
        return is_domain(host, config)
    return is_domain(s, config)


def is_email(s: str, config: FeatureConfig) -> bool:
    m = _EMAIL.match(s)
    return bool(m) and is_domain(m.group(2), config)


def is_malware_name(s: str, config: FeatureConfig) -> bool:
    low = s.lower()
    for prefix in config.malware_prefixes:
        if low.startswith(prefix) and len(s) > len(prefix) \
                and s[len(prefix)] in config.malware_delimiters:
            return True
    return False


def compute_features(token, config: FeatureConfig | None = None) -> np.ndarray:
    """22-dim spelling feature vector of one token (a ``Token`` or a string)."""
    s = getattr(token, "surface", token)
    config = config or default_config()
    v = np.zeros(N_FEATURES)
    v[0] = is_ipv4(s)
    v[1] = has_domain(s, config)
    v[2] = bool(_HASH.match(s))
    v[3] = bool(_URL.match(s))
    v[4] = bool(_CVE.match(s))
    v[5] = bool(_FILE_INFO.match(s))
    v[6] = is_email(s, config)
    v[7] = is_malware_name(s, config)

    digits = sum(c.isdecimal() for c in s)
    alphas = sum(c.isalpha() for c in s)
    v[8] = digits > 0
    v[9] = digits == len(s)
    v[10] = alphas > 0
    v[11] = alphas == len(s)
    v[12] = digits > 0 and alphas > 0
    v[13] = digits + alphas == len(s)
    for k, ch in enumerate(DELIMITERS):
        n = s.count(ch)
        v[14 + 2 * k] = n > 0
        v[15 + 2 * k] = n
    return v


def sentence_features(tokens, config: FeatureConfig | None = None) -> np.ndarray:
    config = config or default_config()
    if not tokens:
        return np.zeros((0, N_FEATURES))
    return np.stack([compute_features(t, config) for t in tokens])


class FeatureProjection:
    """Trainable affine map over spelling features, identity at initialisation."""

    def __init__(self, weight=None, bias=None):
        self.weight = np.eye(N_FEATURES) if weight is None else np.asarray(weight, dtype=float)
        self.bias = np.zeros(N_FEATURES) if bias is None else np.asarray(bias, dtype=float)

    def __call__(self, v):
        return project_features(v, self)


def project_features(v, proj: FeatureProjection) -> np.ndarray:
    """``weight @ v + bias``; ``v`` may be one vector or an (n, 22) stack."""
    v = np.asarray(v, dtype=float)
    return v @ proj.weight.T + proj.bias


def project_features_backward(v, proj: FeatureProjection, grad_out):
    """Gradients of ``project_features`` w.r.t. (v, weight, bias)."""
    v = np.atleast_2d(v)
    grad_out = np.atleast_2d(grad_out)
    return grad_out @ proj.weight, grad_out.T @ v, grad_out.sum(axis=0)


class SpellingFeatures(TransformerMixin, BaseEstimator):
    """Transformer mapping a token list to its (n_tokens, 22) feature matrix.

    Parameters
    ----------
    tld_path : str, optional
        TLD list file; defaults to ``$IOCNER_TLD_PATH`` or the bundled list.
    malware_path : str, optional
        Malware prefix list file; defaults to the bundled list.
    """

    def __init__(self, tld_path=None, malware_path=None):
        self.tld_path = tld_path
        self.malware_path = malware_path

    def fit(self, X=None, y=None):
        self.config_ = FeatureConfig.load(self.tld_path, self.malware_path)
        self.n_features_out_ = N_FEATURES
        return self

    def transform(self, X):
        if not hasattr(self, "config_"):
            self.fit()
        return sentence_features(list(X), self.config_)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_NAMES, dtype=object)
