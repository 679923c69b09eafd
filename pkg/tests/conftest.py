from hypothesis import HealthCheck, settings

settings.register_profile(
    "shapelift",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("shapelift")
