import threading

import pytest

from engageopt import reward
from engageopt.generators import RetryableRemoteError


class SequenceEndpoint:
    """Mock chat endpoint driven by a script of texts/exceptions.

    Once the script is exhausted, `default` is returned (or raised). Thread
    safe; counts every complete() call.
    """

    def __init__(self, script=(), default="Generated subject line"):
        self.script = list(script)
        self.default = default
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, spec, post_text):
        with self._lock:
            self.calls += 1
            item = self.script.pop(0) if self.script else self.default
        if isinstance(item, Exception):
            raise item
        return item


class FailingEndpoint:
    """Mock endpoint that always raises a retryable error."""

    def __init__(self):
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, spec, post_text):
        with self._lock:
            self.calls += 1
        raise RetryableRemoteError("status 503")


def no_sleep(_):
    pass


@pytest.fixture
def toy_params():
    """Small trained pairwise model favoring longer subjects."""
    pairs = [
        reward.PairDatum("a post about roadwork on Oak Street", "Roadwork on Oak Street starts", "Hello."),
        reward.PairDatum("a post about a lost dog nearby", "Lost dog seen near the park", "Hi all."),
        reward.PairDatum("a post about free mulch", "Free mulch available this weekend", "Good morning."),
    ]
    return reward.train_pairwise(pairs, reward.TrainConfig(learning_rate=1.0, max_epochs=300, seed=0))
