import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

setuptools.setup(
    name="wsiqa",
    version="0.3.0",
    author="Peter Richards",
    author_email="wsiqa@peter.net",
    license='MIT',
    description="Weakly supervised no-reference image quality assessment toolkit",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="https://github.com/pr/wsiqa",
    install_requires=[
        "arrow",
        "numpy",
        "scipy",
        "Pillow>=9.1",
        "scikit-image",
        "pandas",
    ],
    tests_require=[
        "pytest",
        "pytest-cov",
        "hypothesis",
    ],
    entry_points={
        "console_scripts": [
            "wsiqa = wsiqa.cli:main",
        ],
    },
    packages=setuptools.find_namespace_packages("src"),
    package_dir={"": "src"},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8',
)
