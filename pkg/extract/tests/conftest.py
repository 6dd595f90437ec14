import json

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def two_class_fixture(tmp_path):
    """Two classes with color-themed texts and two solid-color videos."""
    bank = {
        "version": 1,
        "n_spatio": 2,
        "n_temporal": 2,
        "template_version": "body-v1",
        "classes": [
            {
                "name": "red flag waving",
                "spatio": ["a red flag", "red fabric in the wind"],
                "temporal_raw": ["raise the red flag", "wave the red flag"],
                "temporal_conditioned": [
                    "A video of red flag waving usually includes raise the red flag",
                    "A video of red flag waving usually includes wave the red flag",
                ],
                "spatio_emb": None,
                "temporal_emb": None,
                "category_emb": None,
            },
            {
                "name": "blue sea swimming",
                "spatio": ["the blue sea", "blue water"],
                "temporal_raw": ["dive into the blue water", "swim in the blue sea"],
                "temporal_conditioned": [
                    "A video of blue sea swimming usually includes dive into the blue water",
                    "A video of blue sea swimming usually includes swim in the blue sea",
                ],
                "spatio_emb": None,
                "temporal_emb": None,
                "category_emb": None,
            },
        ],
    }
    bank_path = tmp_path / "bank_in.json"
    bank_path.write_text(json.dumps(bank, indent=2))

    frames_root = tmp_path / "frames"
    rng = np.random.default_rng(0)
    for video, base in (("vid_red", (214, 40, 30)), ("vid_blue", (25, 60, 200))):
        video_dir = frames_root / video
        video_dir.mkdir(parents=True)
        for t in range(3):
            jitter = rng.integers(-12, 13, size=3)
            color = tuple(int(np.clip(c + j, 0, 255)) for c, j in zip(base, jitter))
            Image.new("RGB", (16, 16), color).save(video_dir / f"frame_{t:02d}.png")
    return bank_path, frames_root
