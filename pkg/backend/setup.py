"""
Setup script for ctrforge
"""

from setuptools import setup, find_packages

setup(
    name="ctrforge",
    version="1.0.0",
    description="Click-through-rate prediction for in-app content recommendation",
    packages=find_packages(exclude=["tests", "tests.*"]),
    python_requires=">=3.11",
    install_requires=[
        "numpy==2.0.1",
        "pandas==2.2.2",
        "scipy==1.14.0",
        "pydantic==2.8.2",
        "pydantic-settings==2.2.1",
        "python-dotenv==1.0.1",
        "click==8.1.7",
    ],
    extras_require={
        "dev": [
            "pytest==7.4.3",
        ]
    },
    entry_points={
        "console_scripts": [
            "ctrforge=app.main:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
)
