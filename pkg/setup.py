import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="finalitypy",
    version="0.1.0",
    description="Confirmation finality laboratory for longest-chain blockchains",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests", "demos"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: Unix",
    ],
    install_requires=['numpy', 'scipy', 'numba', 'pandas>=1.5'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['finalitypy=finalitypy.cli:main']},
    python_requires='>=3.8',
)
