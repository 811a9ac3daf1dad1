from setuptools import find_packages, setup

setup(
    name="shape-gradient-fields",
    version="0.1.0",
    description=(
        "Point-cloud shape generation by learning and sampling gradient "
        "fields of log-density"
    ),
    packages=find_packages(exclude=("tests", "tests.*")),
    python_requires=">=3.9",
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "scikit-learn",
        "scikit-image",
        "matplotlib",
        "pillow",
        "tqdm",
        "loguru",
        "mlflow",
    ],
    extras_require={
        "test": ["pytest", "hypothesis", "torch"],
        "lint": ["black", "isort"],
    },
    entry_points={
        "console_scripts": [
            "shape-gradient-fields=shape_gradient_fields.cli:main",
        ],
    },
)
