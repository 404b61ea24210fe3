"""
coopsched installation script.
"""

import setuptools

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

# Read the version from the version file
version = {}
with open("coopsched/version.py") as fp:
    exec(fp.read(), version)

setuptools.setup(
    name="coopsched",
    version=version["__version__"],
    description="Schedule-driven traffic signal control with cooperative speed advisories",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    package_dir={"": "."},
    packages=["coopsched"],
    package_data={"coopsched": ["scenarios/*.yaml"]},
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.17.0,<2.0.0",
        "scipy",
        "pandas",
        "joblib",
        "PyYAML",
    ],
    entry_points={"console_scripts": ["coopsched=coopsched.cli:main"]},
)
