import numpy as np
import pytest

from xmodal.store import FeatureRecord, FeatureStore, Modality, StoreManifest


def make_store(dim=4, classes=3, per_class=6, modality=Modality.IMAGE,
               seed=0, test_per_class=0, views=1):
    """Small hand-rolled store; vectors are arbitrary nonzero floats."""
    rng = np.random.default_rng(seed)
    records = []
    test_ids = []
    sid = 0
    for c in range(classes):
        for i in range(per_class + test_per_class):
            for v in range(views):
                vec = rng.standard_normal(dim).astype(np.float32)
                records.append(FeatureRecord(sid, c, modality, v, vec))
            if i >= per_class:
                test_ids.append(sid)
            sid += 1
    manifest = StoreManifest(
        dataset="toy",
        classes={c: f"c{c}" for c in range(classes)},
        test_samples=test_ids or None,
    )
    return FeatureStore(dim, records, manifest)


@pytest.fixture
def toy_store():
    return make_store()
