import numpy as np
import pytest


@pytest.fixture
def tiny_dataset(tmp_path):
    """Small CSV ratings + trust files and a fast off-grid config file."""
    rng = np.random.default_rng(0)
    pairs = set()
    while len(pairs) < 200:
        pairs.add((int(rng.integers(1000, 1028)), int(rng.integers(5000, 5022))))
    lines = ["user_id,item_id,rating"]
    for u, v in sorted(pairs):
        lines.append(f"{u},{v},{int(rng.integers(1, 6))}")
    (tmp_path / "ratings.csv").write_text("\n".join(lines) + "\n")

    trust = set()
    while len(trust) < 50:
        a, b = int(rng.integers(1000, 1028)), int(rng.integers(1000, 1028))
        if a != b:
            trust.add((a, b))
    tlines = ["trustor_id,trustee_id"]
    tlines += [f"{a},{b}" for a, b in sorted(trust)]
    (tmp_path / "trust.csv").write_text("\n".join(tlines) + "\n")

    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"""# test configuration
ratings = {tmp_path / 'ratings.csv'}
trust = {tmp_path / 'trust.csv'}
train_fraction = 0.8
embedding_size = 6
reservation = 5
delta = 1
learning_rate = 0.001
batch_size = 32
max_epochs = 2
seed = 1
repeats = 1
allow_off_grid = true
out_dir = {tmp_path / 'out'}
cache_dir = {tmp_path / 'cache'}
""")
    return tmp_path
