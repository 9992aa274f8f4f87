from datetime import timedelta

from hypothesis import settings

settings.register_profile(
    "ci",
    max_examples=25,
    deadline=timedelta(seconds=2),
)
settings.load_profile("ci")
