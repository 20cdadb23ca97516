import pytest

from fedspeech.federation import synthetic_manifest, write_manifest

FIXTURE_SEED = 7


@pytest.fixture(scope="session")
def corpus_records():
    """Corpus-scale synthetic manifest: 195k utterances, 6k speakers, 5.5 s mean."""
    return synthetic_manifest(n_utterances=195_000, n_speakers=6_000,
                              mean_duration_s=5.5, seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def corpus_manifest_path(corpus_records, tmp_path_factory):
    path = tmp_path_factory.mktemp("manifest") / "corpus.tsv"
    write_manifest(path, corpus_records)
    return path
