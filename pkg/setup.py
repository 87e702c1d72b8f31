from setuptools import setup, find_packages

setup(
    name="spatialgen-kit",
    version="0.4.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    py_modules=["main"],
    install_requires=[
        "psutil>=5.8.0",
        "numpy>=1.21.0",
        "scipy>=1.9.0",
        "shapely>=2.0.0",
        "Pillow>=9.0.0",
        "torch>=2.0.0",
        "structlog>=21.5.0",
        "rich>=12.0.0",
        "click>=8.0.0",
        "pydantic>=2.0.0",
        "PyYAML>=6.0",
        "python-dotenv>=0.19.0",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0.0",
            "pytest-asyncio>=0.18.0",
            "pytest-cov>=3.0.0",
            "ruff>=0.3.0",
        ],
    },
    entry_points={"console_scripts": ["spatialgen = main:main"]},
    python_requires=">=3.11"
)
