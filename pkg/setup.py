from setuptools import setup


MODULES = [
    "bumps",
    "config",
    "control",
    "errors",
    "gridio",
    "heat_kernel",
    "kato",
    "log_setup",
    "parallel",
    "paths",
    "resolvent",
    "simulate",
    "stable_core",
    "validate",
]


setup(
    name="katoflow",
    version="0.1.0",
    description="Heat kernels, resolvents and path simulation for stable processes with Kato-class drift.",
    package_dir={"": "python"},
    py_modules=MODULES,
    python_requires=">=3.9",
    install_requires=["numpy>=1.22", "scipy>=1.11"],
    entry_points={"console_scripts": ["katoflow=control:main"]},
)
