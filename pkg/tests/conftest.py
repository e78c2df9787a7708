import pytest

from emojilens.lexicon import bundled_emoji_lexicon, bundled_sentiment_lexicon, label_lexicon


@pytest.fixture(scope="session")
def lexicon():
    return bundled_emoji_lexicon()


@pytest.fixture(scope="session")
def labels(lexicon):
    return label_lexicon(lexicon, bundled_sentiment_lexicon())
