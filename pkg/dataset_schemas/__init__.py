"""
입력 CSV 스키마와 데이터셋 그룹 정의 모듈
"""
