from setuptools import setup

setup(
    name="minimax_design_lib",
    version="0.2",
    description="Criteria and structures for robust minimax regression designs",
    long_description=(
        "This project contains the finite design spaces, regressor bases and "
        + "variance / maximum-bias criteria used to construct designs that stay "
        + "efficient when the fitted regression response is only approximately right."
    ),
    classifiers=[
        "Development Status :: 4 - Beta",
        "License :: OSI Approved :: Mozilla Public License 2.0 (MPL 2.0)",
        "Programming Language :: Python :: 3",
    ],
    keywords="optimal experimental design minimax robust regression imse",
    packages=["minimax_design_lib"],
    license="Mozilla Public License 2.0 (MPL 2.0)",
    install_requires=["numpy>=1.17", "scipy>=1.1"],
    zip_safe=True,
)
